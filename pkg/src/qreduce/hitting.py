"""The discontinuous reduction process.

Gaussian sharpening operators act on the state at scheduled times; the
centre of each hit is drawn from the exact quadratic-form density, which
is a mixture of Gaussians over the joint eigenvectors. Between hits the
state evolves unitarily (exactly, via the Hamiltonian eigensystem).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, VanishingNormError
from .hilbert import Hamiltonian, QuantitySet, StateVector
from .trajectory import EventLog, TrajectoryRecord, record_grid

VANISHING_NORM_THRESHOLD = 1e-300

__all__ = [
    "Schedule",
    "HittingConfig",
    "HitStream",
    "sharpening_operator",
    "apply_hitting",
    "sample_hitting_centre",
    "hitting_density",
    "schedule_hittings",
    "simulate_hitting_trajectory",
    "simulate_multistream_hitting_trajectory",
]


class Schedule(enum.Enum):
    """Hitting-time schedules: deterministic grid or Poisson stream."""

    EVENLY_SPACED = "evenly-spaced"
    POISSON = "poisson"


@dataclass(frozen=True)
class HittingConfig:
    """Parameters of one hitting process.

    ``beta`` is the sharpening accuracy (inverse squared width of the
    Gaussian hit), ``mu`` the mean hitting frequency. Their product fixes
    the effectiveness; the diffusive process with strength
    ``gamma = beta * mu / 2`` is the infinite-frequency limit.
    """

    beta: float
    mu: float
    t_end: float
    record_interval: float
    schedule: Schedule = Schedule.POISSON

    def __post_init__(self):
        for name in ("beta", "mu", "t_end", "record_interval"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.record_interval > self.t_end:
            raise ValueError("record_interval must not exceed t_end")
        if not isinstance(self.schedule, Schedule):
            object.__setattr__(self, "schedule", Schedule(self.schedule))


@dataclass(frozen=True)
class HitStream:
    """An independent hitting stream acting on a subset of quantities.

    Used for models where each degree of freedom is sharpened at its own
    frequency (e.g. one stream per particle); ``quantity_indices`` points
    into the shared commuting quantity set.
    """

    quantity_indices: tuple[int, ...]
    beta: float
    mu: float
    schedule: Schedule = Schedule.POISSON


def _centre_vector(centre, num_quantities: int) -> np.ndarray:
    a = np.asarray(centre, dtype=float).reshape(-1)
    if a.size == 1 and num_quantities == 1:
        return a
    if a.size != num_quantities:
        raise DimensionMismatchError(
            f"centre has {a.size} components, expected {num_quantities}"
        )
    return a


def _diagonal_factors(quantities: QuantitySet, centre: np.ndarray, beta: float) -> np.ndarray:
    """Sharpening factors on each joint eigenvector, prefactor included."""
    offsets = quantities.eigenvalue_table - centre[np.newaxis, :]
    dist2 = np.sum(offsets**2, axis=1)
    pref = (beta / math.pi) ** (quantities.num_quantities / 4.0)
    return pref * np.exp(-0.5 * beta * dist2)


def sharpening_operator(quantities: QuantitySet, centre, beta: float) -> np.ndarray:
    """The Gaussian sharpening matrix centred at ``centre``.

    Diagonal in the joint eigenbasis with entries
    ``(beta/pi)^(K/4) * exp(-beta/2 * sum_p (alpha_kp - a_p)^2)``; returned
    in the computational basis.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    a = _centre_vector(centre, quantities.num_quantities)
    factors = _diagonal_factors(quantities, a, beta)
    basis = quantities.joint_basis
    return (basis * factors[np.newaxis, :]) @ basis.conj().T


def apply_hitting(
    psi: StateVector, quantities: QuantitySet, centre, beta: float
) -> tuple[StateVector, float]:
    """Apply one sharpening and renormalize.

    Returns the post-hit state and the squared norm of the unnormalized
    result, which is the probability density weight of the centre.

    Raises
    ------
    VanishingNormError
        If the squared norm falls below 1e-300: the exact sampler cannot
        produce such a centre, so the trajectory must abort.
    """
    a = _centre_vector(centre, quantities.num_quantities)
    factors = _diagonal_factors(quantities, a, beta)
    coeffs = quantities.to_joint(psi)
    sharpened = factors * coeffs
    norm2 = float(np.sum(np.abs(sharpened) ** 2))
    if norm2 < VANISHING_NORM_THRESHOLD:
        raise VanishingNormError(
            f"hitting at centre {a} annihilated the state (|chi|^2 = {norm2!r})"
        )
    post = quantities.from_joint(sharpened / math.sqrt(norm2))
    return StateVector(post, normalize=True), norm2


def sample_hitting_centre(
    psi: StateVector, quantities: QuantitySet, beta: float, rng: np.random.Generator
) -> np.ndarray:
    """Draw a hitting centre from the exact density.

    The density is a Born-weighted mixture of isotropic Gaussians of
    per-component variance 1/(2 beta) around the eigenvalue rows, so one
    categorical draw plus Gaussian noise reproduces it exactly.
    """
    weights = quantities.born_weights(psi)
    k = int(np.searchsorted(np.cumsum(weights), rng.random()))
    k = min(k, quantities.dim - 1)
    row = quantities.eigenvalue_table[k]
    sigma = math.sqrt(1.0 / (2.0 * beta))
    return row + sigma * rng.standard_normal(quantities.num_quantities)


def hitting_density(
    psi: StateVector, quantities: QuantitySet, centre, beta: float
) -> float:
    """Probability density of a hitting centre; sampler cross-check oracle."""
    a = _centre_vector(centre, quantities.num_quantities)
    weights = quantities.born_weights(psi)
    offsets = quantities.eigenvalue_table - a[np.newaxis, :]
    dist2 = np.sum(offsets**2, axis=1)
    pref = (beta / math.pi) ** (quantities.num_quantities / 2.0)
    return float(pref * np.sum(weights * np.exp(-beta * dist2)))


def schedule_hittings(config: HittingConfig, rng: np.random.Generator) -> np.ndarray:
    """Hitting times in (0, t_end], per the configured schedule.

    Evenly spaced: k/mu for k = 1..floor(mu * t_end). Poisson: a
    homogeneous process of rate mu (count first, then sorted uniforms).
    An empty result is legitimate: the trajectory then evolves purely
    unitarily and is reported as unresolved downstream.
    """
    if config.schedule is Schedule.EVENLY_SPACED:
        count = int(math.floor(config.mu * config.t_end + 1e-9))
        times = np.arange(1, count + 1) / config.mu
        return np.minimum(times, config.t_end)
    count = int(rng.poisson(config.mu * config.t_end))
    times = config.t_end * (1.0 - rng.random(count))
    times.sort()
    return times


def _coerce_rng(rng, seed):
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng)), int(rng) if seed is None else seed
    if isinstance(rng, np.random.Generator):
        return rng, seed
    raise TypeError("rng must be an integer seed or a numpy Generator")


class _JointWorkspace:
    """Per-simulation cache: joint-basis Hamiltonian eigensystem."""

    def __init__(self, quantities: QuantitySet, hamiltonian: Hamiltonian | None):
        self.quantities = quantities
        self.table = quantities.eigenvalue_table
        if hamiltonian is not None:
            if hamiltonian.dim != quantities.dim:
                raise DimensionMismatchError(
                    "hamiltonian dimension does not match the quantity set"
                )
            basis = quantities.joint_basis
            h_joint = basis.conj().T @ hamiltonian.matrix @ basis
            h_joint = (h_joint + h_joint.conj().T) / 2.0
            self.h_vals, self.h_vecs = np.linalg.eigh(h_joint)
            self.hbar = hamiltonian.hbar
        else:
            self.h_vals = None

    def evolve(self, coeffs: np.ndarray, dt: float) -> np.ndarray:
        if self.h_vals is None or dt == 0.0:
            return coeffs
        phases = np.exp(-1j * self.h_vals * dt / self.hbar)
        return self.h_vecs @ (phases * (self.h_vecs.conj().T @ coeffs))


def _simulate_hitting(
    psi0: StateVector,
    hamiltonian: Hamiltonian | None,
    quantities: QuantitySet,
    hit_times: np.ndarray,
    hit_streams: np.ndarray,
    streams: list[HitStream],
    t_end: float,
    record_interval: float,
    rng: np.random.Generator,
    store_states: bool,
    seed: int | None,
) -> TrajectoryRecord:
    """Shared core: chronological sweep over hits and record times.

    At equal times the hit is applied first, so a record at time t
    reflects every event with time <= t.
    """
    ws = _JointWorkspace(quantities, hamiltonian)
    table = quantities.eigenvalue_table
    num_q = quantities.num_quantities
    coeffs = quantities.to_joint(psi0)
    rec_times = record_grid(t_end, record_interval)

    sigma = {i: math.sqrt(1.0 / (2.0 * s.beta)) for i, s in enumerate(streams)}
    stream_cols = {i: np.array(s.quantity_indices, dtype=int) for i, s in enumerate(streams)}

    weights_out = np.empty((rec_times.size, quantities.dim))
    expect_out = np.empty((rec_times.size, num_q))
    states_out: list[np.ndarray] | None = [] if store_states else None
    centres_out = np.full((hit_times.size, num_q), np.nan)

    def record(slot: int):
        w = np.abs(coeffs) ** 2
        w /= w.sum()
        weights_out[slot] = w
        expect_out[slot] = w @ table
        if states_out is not None:
            snap = quantities.from_joint(coeffs)
            snap.flags.writeable = False
            states_out.append(snap)

    now = 0.0
    rec_idx = 0
    hit_idx = 0
    while rec_idx < rec_times.size or hit_idx < hit_times.size:
        next_rec = rec_times[rec_idx] if rec_idx < rec_times.size else math.inf
        next_hit = hit_times[hit_idx] if hit_idx < hit_times.size else math.inf
        if next_hit <= next_rec:
            coeffs = ws.evolve(coeffs, next_hit - now)
            now = next_hit
            s = int(hit_streams[hit_idx])
            cols = stream_cols[s]
            w = np.abs(coeffs) ** 2
            w_sum = w.sum()
            k = int(np.searchsorted(np.cumsum(w), rng.random() * w_sum))
            k = min(k, quantities.dim - 1)
            centre = table[k, cols] + sigma[s] * rng.standard_normal(cols.size)
            centres_out[hit_idx, cols] = centre
            offsets = table[:, cols] - centre[np.newaxis, :]
            beta = streams[s].beta
            pref2 = (beta / math.pi) ** (cols.size / 2.0)
            sharpened = np.exp(-0.5 * beta * np.sum(offsets**2, axis=1)) * coeffs
            norm2 = float(np.sum(np.abs(sharpened) ** 2))
            if pref2 * norm2 < VANISHING_NORM_THRESHOLD:
                raise VanishingNormError(
                    f"hitting at t={now} annihilated the state", seed=seed
                )
            coeffs = sharpened / math.sqrt(norm2)
            hit_idx += 1
        else:
            coeffs = ws.evolve(coeffs, next_rec - now)
            now = next_rec
            record(rec_idx)
            rec_idx += 1

    return TrajectoryRecord(
        sample_times=rec_times,
        born_weights=weights_out,
        expectations=expect_out,
        events=EventLog(hit_times, centres_out, num_quantities=num_q),
        seed=seed,
        states=states_out,
    )


def simulate_hitting_trajectory(
    psi0: StateVector,
    hamiltonian: Hamiltonian | None,
    quantities: QuantitySet,
    config: HittingConfig,
    rng,
    *,
    store_states: bool = False,
    seed: int | None = None,
) -> TrajectoryRecord:
    """One realization of the hitting process.

    Alternates exact unitary evolution with sample-then-apply hits at the
    scheduled times and records Born weights and expectations on the
    configured grid. With ``hamiltonian=None`` this is the pure reduction
    process. ``rng`` may be an integer seed (stored on the record) or a
    ``numpy.random.Generator``.
    """
    rng, seed = _coerce_rng(rng, seed)
    hit_times = schedule_hittings(config, rng)
    stream = HitStream(
        quantity_indices=tuple(range(quantities.num_quantities)),
        beta=config.beta,
        mu=config.mu,
        schedule=config.schedule,
    )
    return _simulate_hitting(
        psi0,
        hamiltonian,
        quantities,
        hit_times,
        np.zeros(hit_times.size, dtype=int),
        [stream],
        config.t_end,
        config.record_interval,
        rng,
        store_states,
        seed,
    )


def simulate_multistream_hitting_trajectory(
    psi0: StateVector,
    hamiltonian: Hamiltonian | None,
    quantities: QuantitySet,
    streams: list[HitStream],
    t_end: float,
    record_interval: float,
    rng,
    *,
    store_states: bool = False,
    seed: int | None = None,
) -> TrajectoryRecord:
    """Hitting process with independent per-stream schedules.

    Each stream sharpens its own subset of the shared commuting quantity
    set at its own frequency and accuracy (one stream per particle in the
    distinguishable-particle model). Event centres are logged in full-K
    rows with NaN outside the hit stream's quantities.
    """
    rng, seed = _coerce_rng(rng, seed)
    all_times: list[np.ndarray] = []
    all_ids: list[np.ndarray] = []
    for i, stream in enumerate(streams):
        cfg = HittingConfig(
            beta=stream.beta,
            mu=stream.mu,
            t_end=t_end,
            record_interval=record_interval,
            schedule=stream.schedule,
        )
        times = schedule_hittings(cfg, rng)
        all_times.append(times)
        all_ids.append(np.full(times.size, i, dtype=int))
    times = np.concatenate(all_times) if all_times else np.empty(0)
    ids = np.concatenate(all_ids) if all_ids else np.empty(0, dtype=int)
    order = np.argsort(times, kind="stable")
    return _simulate_hitting(
        psi0,
        hamiltonian,
        quantities,
        times[order],
        ids[order],
        streams,
        t_end,
        record_interval,
        rng,
        store_states,
        seed,
    )


# -- vectorized chain helpers -------------------------------------------------
#
# Statistical harnesses need millions of sharpenings; these operate on a
# batch of joint-basis coefficient rows at once. They are exactly the
# per-trajectory updates above, restricted to the no-Hamiltonian case.


def _sample_centres_batch(
    weights: np.ndarray, table: np.ndarray, beta: float, rng: np.random.Generator
) -> np.ndarray:
    """One centre per row of ``weights``; exact mixture sampling."""
    cum = np.cumsum(weights, axis=1)
    cum /= cum[:, -1:]
    u = rng.random((weights.shape[0], 1))
    k = (u > cum).sum(axis=1)
    noise = rng.standard_normal((weights.shape[0], table.shape[1]))
    return table[k] + noise * math.sqrt(1.0 / (2.0 * beta))


def _apply_hittings_batch(
    coeffs: np.ndarray, table: np.ndarray, centres: np.ndarray, beta: float
) -> np.ndarray:
    """Sharpen and renormalize each row; prefactors cancel on renormalization."""
    dist2 = np.sum((table[np.newaxis, :, :] - centres[:, np.newaxis, :]) ** 2, axis=2)
    sharpened = np.exp(-0.5 * beta * dist2) * coeffs
    norm2 = np.sum(np.abs(sharpened) ** 2, axis=1)
    if np.any(norm2 < VANISHING_NORM_THRESHOLD):
        raise VanishingNormError("a batched hitting annihilated a state")
    return sharpened / np.sqrt(norm2)[:, np.newaxis]


@dataclass
class ChainResult:
    """Output of a batched hitting chain."""

    coeffs: np.ndarray
    centres: np.ndarray | None = None
    recorded_weights: np.ndarray | None = None


def run_hitting_chain_batch(
    coeffs: np.ndarray,
    quantities: QuantitySet,
    beta: float,
    n_hits,
    rng: np.random.Generator,
    *,
    collect_centres: bool = False,
    record_every: int | None = None,
) -> ChainResult:
    """Run many independent hitting chains in lockstep (no Hamiltonian).

    ``coeffs`` holds one joint-basis row per chain; ``n_hits`` is a scalar
    or per-chain array of hit counts (rows past their count stay frozen,
    covering Poisson-distributed counts at a fixed probe time).
    ``collect_centres`` returns the (batch, max_hits, K) centre tensor,
    NaN-padded; ``record_every`` additionally snapshots Born weights
    after every that many hits (including hit 0).
    """
    coeffs = np.array(coeffs, dtype=np.complex128)
    table = quantities.eigenvalue_table
    batch = coeffs.shape[0]
    counts = np.broadcast_to(np.asarray(n_hits, dtype=int), (batch,))
    max_hits = int(counts.max()) if batch else 0

    centres_out = (
        np.full((batch, max_hits, table.shape[1]), np.nan) if collect_centres else None
    )
    recorded = []
    if record_every is not None:
        recorded.append(np.abs(coeffs) ** 2)

    for h in range(max_hits):
        active = np.nonzero(counts > h)[0]
        rows = coeffs[active]
        weights = np.abs(rows) ** 2
        centres = _sample_centres_batch(weights, table, beta, rng)
        coeffs[active] = _apply_hittings_batch(rows, table, centres, beta)
        if centres_out is not None:
            centres_out[active, h, :] = centres
        if record_every is not None and (h + 1) % record_every == 0:
            recorded.append(np.abs(coeffs) ** 2)

    return ChainResult(
        coeffs=coeffs,
        centres=centres_out,
        recorded_weights=np.stack(recorded) if record_every is not None else None,
    )


def run_evenly_spaced_ensemble(
    psi0: StateVector,
    quantities: QuantitySet,
    beta: float,
    mu: float,
    t_end: float,
    record_interval: float,
    n_trajectories: int,
    rng,
    *,
    collect_events: bool = True,
) -> list[TrajectoryRecord]:
    """Fast ensemble for the evenly spaced schedule without a Hamiltonian.

    Every trajectory shares the hitting grid k/mu, so the whole ensemble
    advances in lockstep through one batched chain; the statistics match
    the per-trajectory engine exactly in distribution. One generator
    drives the batch, so results are deterministic given the seed but do
    not decompose into per-trajectory streams.
    """
    rng, _ = _coerce_rng(rng, None)
    hits_per_record = mu * record_interval
    if abs(hits_per_record - round(hits_per_record)) > 1e-9:
        raise ValueError("mu * record_interval must be an integer for the batched path")
    hits_per_record = int(round(hits_per_record))
    if hits_per_record < 1:
        raise ValueError("need at least one hitting per record interval")
    rec_times = record_grid(t_end, record_interval)
    n_hits = (rec_times.size - 1) * hits_per_record

    coeffs0 = np.tile(quantities.to_joint(psi0), (n_trajectories, 1))
    result = run_hitting_chain_batch(
        coeffs0,
        quantities,
        beta,
        n_hits,
        rng,
        collect_centres=collect_events,
        record_every=hits_per_record,
    )
    table = quantities.eigenvalue_table
    weights = result.recorded_weights  # (records, batch, d)
    expectations = weights @ table
    hit_times = np.arange(1, n_hits + 1) / mu
    records = []
    for i in range(n_trajectories):
        events = (
            EventLog(hit_times, result.centres[i])
            if collect_events
            else EventLog(num_quantities=quantities.num_quantities)
        )
        records.append(
            TrajectoryRecord(
                sample_times=rec_times,
                born_weights=weights[:, i, :],
                expectations=expectations[:, i, :],
                events=events,
                seed=None,
            )
        )
    return records
