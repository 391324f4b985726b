"""Oracles and statistical harnesses for the two reduction processes.

The ensemble of either process has a deterministic statistical operator:
one hitting averages to an elementwise Gaussian damping of off-diagonal
elements in the joint eigenbasis, a Poisson stream of hittings to an
exponential channel, and the diffusive process to a double-commutator
(Lindblad) generator. These closed forms, plus brute-force quadrature
cross-checks, calibrate the Monte Carlo engines and quantify how fast
the hitting process approaches its continuous limit under
beta * mu = 2 * gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sp_stats

from .errors import (
    DimensionMismatchError,
    InsufficientEventsError,
    MissingSnapshotError,
)
from .hilbert import Hamiltonian, QuantitySet, StateVector
from .hitting import run_hitting_chain_batch
from .continuous import ContinuousConfig, simulate_continuous_batch, suggested_dt
from .trajectory import TrajectoryRecord

__all__ = [
    "DensityMatrix",
    "EnsembleStats",
    "trace_norm_distance",
    "exact_hitting_map",
    "hitting_master_evolution",
    "lindblad_evolution",
    "ensemble_density_matrix",
    "ensemble_stats",
    "convergence_sweep",
    "factorization_check",
    "db_statistics",
    "sample_factorized_db_windows",
    "collapse_statistics",
    "wilson_interval",
]


class DensityMatrix:
    """Statistical operator: Hermitian, unit trace, positive semidefinite."""

    __slots__ = ("rho",)

    TRACE_TOL = 1e-10
    HERMITIAN_TOL = 1e-10
    EIGEN_TOL = 1e-8

    def __init__(self, rho, *, validate: bool = True):
        m = np.array(rho, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatchError(f"density matrix must be square, got {m.shape}")
        if validate:
            tr = complex(np.trace(m))
            if abs(tr - 1.0) > 100 * self.TRACE_TOL:
                raise ValueError(f"trace is {tr!r}, expected 1")
            defect = float(np.max(np.abs(m - m.conj().T)))
            if defect > 100 * self.HERMITIAN_TOL:
                raise ValueError(f"deviates from Hermiticity by {defect:.3e}")
            lowest = float(np.min(np.linalg.eigvalsh((m + m.conj().T) / 2)))
            if lowest < -self.EIGEN_TOL:
                raise ValueError(f"negative eigenvalue {lowest:.3e}")
        m.flags.writeable = False
        object.__setattr__(self, "rho", m)

    def __setattr__(self, name, value):
        raise AttributeError("DensityMatrix is immutable")

    def __reduce__(self):
        return (_rebuild_density, (np.array(self.rho),))

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @classmethod
    def from_state(cls, psi: StateVector) -> "DensityMatrix":
        amps = psi.amplitudes
        return cls(np.outer(amps, amps.conj()), validate=False)

    @classmethod
    def from_state_rows(cls, rows: np.ndarray) -> "DensityMatrix":
        """Equal-weight mixture of the (n, d) state rows."""
        rows = np.asarray(rows, dtype=np.complex128)
        norms2 = np.sum(np.abs(rows) ** 2, axis=1)
        rho = np.einsum("ni,nj->ij", rows, rows.conj()) / norms2.sum()
        return cls(rho, validate=False)

    def purity(self) -> float:
        return float(np.trace(self.rho @ self.rho).real)

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.rho)))

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim})"


def _rebuild_density(rho):
    return DensityMatrix(rho, validate=False)


def trace_norm_distance(a, b) -> float:
    """Sum of singular values of the difference of two operators."""
    am = a.rho if isinstance(a, DensityMatrix) else np.asarray(a)
    bm = b.rho if isinstance(b, DensityMatrix) else np.asarray(b)
    return float(np.sum(np.linalg.svd(am - bm, compute_uv=False)))


def _pairwise_sq_distances(table: np.ndarray) -> np.ndarray:
    """(d, d) matrix of squared eigenvalue-row separations."""
    diffs = table[:, np.newaxis, :] - table[np.newaxis, :, :]
    return np.sum(diffs**2, axis=-1)


def exact_hitting_map(rho: DensityMatrix, quantities: QuantitySet, beta: float) -> DensityMatrix:
    """Average effect of a single hitting on the statistical operator.

    Integrating S_a rho S_a over all centres leaves the joint-basis
    diagonal untouched and damps element (k, l) by
    exp(-beta/4 * |alpha_k - alpha_l|^2). The limit beta -> 0 is the
    identity map.
    """
    basis = quantities.joint_basis
    rho_joint = basis.conj().T @ rho.rho @ basis
    damping = np.exp(-0.25 * beta * _pairwise_sq_distances(quantities.eigenvalue_table))
    out = basis @ (damping * rho_joint) @ basis.conj().T
    return DensityMatrix(out, validate=False)


def _rk4(rho: np.ndarray, rhs, t_end: float, n_steps: int, sample_slots: dict[int, int],
         out: list[np.ndarray]):
    dt = t_end / n_steps
    if 0 in sample_slots:
        out[sample_slots[0]] = rho.copy()
    for step in range(1, n_steps + 1):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if step in sample_slots:
            out[sample_slots[step]] = rho.copy()
    return rho


def _evolution_grid(t_end: float, sample_times) -> np.ndarray:
    if sample_times is None:
        return np.array([0.0, t_end])
    times = np.asarray(sample_times, dtype=float)
    if np.any(times < 0) or np.any(times > t_end + 1e-12):
        raise ValueError("sample times must lie in [0, t_end]")
    return times


def _deterministic_series(
    rho0: DensityMatrix,
    quantities: QuantitySet,
    rate_matrix: np.ndarray,
    hamiltonian: Hamiltonian | None,
    t_end: float,
    sample_times,
    dt: float | None,
) -> tuple[np.ndarray, list[DensityMatrix]]:
    """Shared driver for both master equations.

    ``rate_matrix`` holds the elementwise decay rates of joint-basis
    off-diagonal elements. With no Hamiltonian the solution is the closed
    form rho_kl(0) * exp(-rate_kl * t); otherwise fourth-order
    Runge-Kutta with the step bounded so (fastest rate) * dt <= 0.01.
    """
    basis = quantities.joint_basis
    rho_joint = basis.conj().T @ rho0.rho @ basis
    times = _evolution_grid(t_end, sample_times)

    def back(m: np.ndarray) -> DensityMatrix:
        return DensityMatrix(basis @ m @ basis.conj().T, validate=False)

    if hamiltonian is None:
        series = [back(np.exp(-rate_matrix * t) * rho_joint) for t in times]
        return times, series

    h_joint = basis.conj().T @ hamiltonian.matrix @ basis
    h_joint = (h_joint + h_joint.conj().T) / 2.0
    hbar = hamiltonian.hbar

    def rhs(m: np.ndarray) -> np.ndarray:
        comm = h_joint @ m - m @ h_joint
        return (-1j / hbar) * comm - rate_matrix * m

    h_scale = float(np.max(np.abs(np.linalg.eigvalsh(h_joint)))) * 2 / hbar
    fastest = max(float(np.max(rate_matrix)), h_scale, 1e-12)
    step = dt if dt is not None else 0.01 / fastest
    n_steps = max(1, int(math.ceil(t_end / step)))
    slot_steps = [int(round(t / t_end * n_steps)) if t_end > 0 else 0 for t in times]
    if len(set(slot_steps)) != len(slot_steps):
        n_steps = max(n_steps, len(times) * 4)
        slot_steps = [int(round(t / t_end * n_steps)) for t in times]
    out: list[np.ndarray | None] = [None] * len(times)
    _rk4(rho_joint, rhs, t_end, n_steps, {s: i for i, s in enumerate(slot_steps)}, out)
    return times, [back(m) for m in out]


def hitting_master_evolution(
    rho0: DensityMatrix,
    quantities: QuantitySet,
    beta: float,
    mu: float,
    t_end: float,
    *,
    hamiltonian: Hamiltonian | None = None,
    sample_times=None,
    dt: float | None = None,
) -> tuple[np.ndarray, list[DensityMatrix]]:
    """Ensemble evolution under a Poisson stream of hittings.

    The generator is mu * (T[rho] - rho) with T the exact hitting map, so
    without a Hamiltonian joint-basis element (k, l) decays at rate
    mu * (1 - exp(-beta/4 * |alpha_k - alpha_l|^2)), which tends to the
    diffusive rate gamma/2 * |alpha_k - alpha_l|^2 as beta -> 0 with
    beta * mu = 2 * gamma held fixed.
    """
    damping = np.exp(-0.25 * beta * _pairwise_sq_distances(quantities.eigenvalue_table))
    rates = mu * (1.0 - damping)
    return _deterministic_series(
        rho0, quantities, rates, hamiltonian, t_end, sample_times, dt
    )


def lindblad_evolution(
    rho0: DensityMatrix,
    quantities: QuantitySet,
    gamma,
    t_end: float,
    *,
    hamiltonian: Hamiltonian | None = None,
    sample_times=None,
    dt: float | None = None,
) -> tuple[np.ndarray, list[DensityMatrix]]:
    """Ensemble evolution of the diffusive process.

    Double-commutator generator; in the joint eigenbasis element (k, l)
    decays at rate 1/2 * sum_p gamma_p (alpha_kp - alpha_lp)^2. ``gamma``
    may be scalar or per-quantity.
    """
    table = quantities.eigenvalue_table
    g = np.full(table.shape[1], gamma, dtype=float) if np.isscalar(gamma) \
        else np.asarray(gamma, dtype=float)
    if g.shape != (table.shape[1],):
        raise DimensionMismatchError("gamma vector length must match the quantity set")
    diffs = table[:, np.newaxis, :] - table[np.newaxis, :, :]
    rates = 0.5 * np.einsum("klp,p->kl", diffs**2, g)
    return _deterministic_series(
        rho0, quantities, rates, hamiltonian, t_end, sample_times, dt
    )


def ensemble_density_matrix(records: list[TrajectoryRecord], t: float) -> DensityMatrix:
    """Monte Carlo statistical operator from recorded state snapshots."""
    if not records:
        raise ValueError("need at least one trajectory")
    rows = []
    for rec in records:
        if rec.states is None:
            raise MissingSnapshotError("trajectories were recorded without snapshots")
        rows.append(rec.state_at(t))
    return DensityMatrix.from_state_rows(np.stack(rows))


@dataclass
class EnsembleStats:
    """Per-time ensemble summaries of a trajectory collection."""

    times: np.ndarray
    mean_weights: np.ndarray      # (samples, d)
    mean_weight_se: np.ndarray    # (samples, d)
    trajectory_count: int
    rho_series: list[DensityMatrix] | None = None

    def __post_init__(self):
        sums = self.mean_weights.sum(axis=1)
        worst = float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0
        if worst > 1e-8:
            raise ValueError(f"mean-weight rows deviate from 1 by {worst:.3e}")


def ensemble_stats(records: list[TrajectoryRecord], *, with_rho: bool = False) -> EnsembleStats:
    """Mean Born weights with standard errors on the shared sample grid."""
    times = records[0].sample_times
    for rec in records[1:]:
        if rec.sample_times.shape != times.shape or not np.allclose(
            rec.sample_times, times
        ):
            raise ValueError("trajectories do not share a sample grid")
    stack = np.stack([rec.born_weights for rec in records])  # (n, samples, d)
    n = stack.shape[0]
    mean = stack.mean(axis=0)
    se = stack.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    rho_series = None
    if with_rho:
        rho_series = [ensemble_density_matrix(records, t) for t in times]
    return EnsembleStats(
        times=times,
        mean_weights=mean,
        mean_weight_se=se,
        trajectory_count=n,
        rho_series=rho_series,
    )


# -- collapse statistics ------------------------------------------------------


def wilson_interval(successes: int, n: int, z: float = 3.0) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1.0 + z**2 / n
    centre = (p + z**2 / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / n + z**2 / (4 * n**2))
    return max(0.0, centre - half), min(1.0, centre + half)


def group_eigenvalue_rows(quantities: QuantitySet, tol: float = 1e-8) -> np.ndarray:
    """Label joint eigenvectors by distinct eigenvalue row.

    Degenerate rows share a label; collapse statistics aggregate Born
    weights over each label before thresholding.
    """
    table = quantities.eigenvalue_table
    scale = max(float(np.max(np.abs(table))), 1.0)
    labels = -np.ones(table.shape[0], dtype=int)
    next_label = 0
    for k in range(table.shape[0]):
        if labels[k] >= 0:
            continue
        same = np.all(np.abs(table - table[k]) <= tol * scale, axis=1)
        labels[same] = next_label
        next_label += 1
    return labels


@dataclass
class OutcomeStat:
    eigenvalues: tuple[float, ...]
    count: int
    frequency: float
    ci_low: float
    ci_high: float


@dataclass
class CollapseReport:
    """Terminal-outcome frequencies with Wilson intervals.

    ``unresolved`` counts trajectories whose largest aggregated Born
    weight never reached the threshold; they are reported, not errors
    (with few hittings there is a genuine probability that no reduction
    takes place).
    """

    outcomes: list[OutcomeStat]
    n_trajectories: int
    n_resolved: int
    unresolved_count: int
    unresolved_fraction: float
    threshold: float
    threshold_sensitivity: dict[float, float]

    def frequency_of(self, label_index: int) -> float:
        return self.outcomes[label_index].frequency


def collapse_statistics(
    records: list[TrajectoryRecord],
    quantities: QuantitySet,
    *,
    threshold: float = 0.999,
    z: float = 3.0,
    extra_thresholds: tuple[float, ...] = (0.99, 0.9999),
) -> CollapseReport:
    """Frequencies of terminal collapse outcomes across an ensemble."""
    labels = group_eigenvalue_rows(quantities)
    n_groups = int(labels.max()) + 1
    table = quantities.eigenvalue_table
    group_rows = [tuple(float(x) for x in table[labels == g][0]) for g in range(n_groups)]

    terminal = np.stack([rec.born_weights[-1] for rec in records])  # (n, d)
    grouped = np.zeros((terminal.shape[0], n_groups))
    for g in range(n_groups):
        grouped[:, g] = terminal[:, labels == g].sum(axis=1)
    best = grouped.max(axis=1)
    winner = grouped.argmax(axis=1)

    sensitivity = {
        float(th): float(np.mean(best < th)) for th in (*extra_thresholds, threshold)
    }
    resolved = best >= threshold
    n_resolved = int(resolved.sum())
    outcomes = []
    for g in range(n_groups):
        count = int(np.sum(resolved & (winner == g)))
        freq = count / n_resolved if n_resolved else 0.0
        lo, hi = wilson_interval(count, n_resolved, z)
        outcomes.append(OutcomeStat(group_rows[g], count, freq, lo, hi))
    n = len(records)
    return CollapseReport(
        outcomes=outcomes,
        n_trajectories=n,
        n_resolved=n_resolved,
        unresolved_count=n - n_resolved,
        unresolved_fraction=(n - n_resolved) / n if n else 0.0,
        threshold=threshold,
        threshold_sensitivity=sensitivity,
    )


# -- factorization of the joint hitting probability ---------------------------


def factorization_check(
    psi: StateVector, quantities: QuantitySet, beta: float, grid
) -> float:
    """Largest gap between conditional and marginal centre densities.

    For two consecutive hittings the joint density factorizes only in the
    beta -> 0 limit; this evaluates
    max over (a1, a2) of |P(a2 | a1 applied) - P(a2)| on the grid using
    the exact matrix expressions. Zero for eigenstates at any beta.
    """
    pts = np.asarray(grid, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, np.newaxis]
    if pts.shape[1] != quantities.num_quantities:
        raise DimensionMismatchError(
            f"grid points have {pts.shape[1]} components, expected "
            f"{quantities.num_quantities}"
        )
    table = quantities.eigenvalue_table
    weights = quantities.born_weights(psi)
    dist2 = np.sum(
        (table[:, np.newaxis, :] - pts[np.newaxis, :, :]) ** 2, axis=2
    )  # (d, n)
    damp = np.exp(-beta * dist2)
    pref = (beta / math.pi) ** (quantities.num_quantities / 2.0)
    marginal = pref * (weights @ damp)                      # (n,)
    joint = pref * ((weights[:, np.newaxis] * damp).T @ damp)  # (n, n): a1 rows
    conditional = joint / (weights @ damp)[:, np.newaxis]
    return float(np.max(np.abs(conditional - marginal[np.newaxis, :])))


# -- noise-increment statistics ------------------------------------------------


@dataclass
class DbMomentReport:
    """Empirical moments of window-summed centre fluctuations.

    Each window of length ``window`` with n hittings contributes
    dB = sqrt(2 beta / mu) * sum_i (a_i - <A> at window start). In the
    infinite-frequency regime these are Gaussian with mean 0, variance
    equal to the window length, and cross-covariance
    2 * beta * window * (quantum covariance), which vanishes with beta.
    """

    window: float
    n_windows: int
    mean_hits_per_window: float
    mean: np.ndarray
    mean_se: np.ndarray
    variance: np.ndarray
    variance_se: np.ndarray
    covariance: np.ndarray
    covariance_se: np.ndarray
    normality_stat: float
    normality_pvalue: float
    samples: np.ndarray = field(repr=False, default=None)


def _moment_report(window: float, db: np.ndarray, counts: np.ndarray) -> DbMomentReport:
    n_windows, num_q = db.shape
    mean = db.mean(axis=0)
    mean_se = db.std(axis=0, ddof=1) / math.sqrt(n_windows)
    centred = db - mean[np.newaxis, :]
    variance = np.sum(centred**2, axis=0) / (n_windows - 1)
    fourth = np.mean(centred**4, axis=0)
    variance_se = np.sqrt(np.maximum(fourth - variance**2, 0.0) / n_windows)
    covariance = (centred.T @ centred) / (n_windows - 1)
    cov_se = np.empty((num_q, num_q))
    for p in range(num_q):
        for q in range(num_q):
            prods = centred[:, p] * centred[:, q]
            cov_se[p, q] = prods.std(ddof=1) / math.sqrt(n_windows)
    stat = 0.0
    pvalue = 1.0
    if n_windows >= 20:
        res = sp_stats.normaltest(db, axis=0)
        stat = float(np.max(np.atleast_1d(res.statistic)))
        pvalue = float(np.min(np.atleast_1d(res.pvalue)))
    return DbMomentReport(
        window=window,
        n_windows=n_windows,
        mean_hits_per_window=float(counts.mean()),
        mean=mean,
        mean_se=mean_se,
        variance=variance,
        variance_se=variance_se,
        covariance=covariance,
        covariance_se=cov_se,
        normality_stat=stat,
        normality_pvalue=pvalue,
        samples=db,
    )


def db_statistics(
    records: list[TrajectoryRecord], beta: float, mu: float, window: float
) -> DbMomentReport:
    """Build window increments from recorded events and report moments.

    Windows (t_w, t_w + window] tile each trajectory; the record interval
    must divide the window so expectations exist at window starts. Events
    landing on a boundary are assigned to the earlier window, robust to
    float rounding of evenly spaced times. Raises
    :class:`InsufficientEventsError` when windows average fewer than 30
    hittings, below the central-limit regime.
    """
    db_rows = []
    count_blocks = []
    scale = math.sqrt(2.0 * beta / mu)
    for rec in records:
        t_end = float(rec.sample_times[-1])
        n_windows = int(math.floor(t_end / window + 1e-9))
        if n_windows == 0:
            continue
        record_interval = float(rec.sample_times[1] - rec.sample_times[0])
        stride = window / record_interval
        if abs(stride - round(stride)) > 1e-6:
            raise ValueError("window must be an integer multiple of the record interval")
        stride = int(round(stride))
        anchors = rec.expectations[: n_windows * stride : stride]  # (windows, K)

        bins = np.ceil(rec.events.times / window - 1e-9).astype(int) - 1
        valid = (bins >= 0) & (bins < n_windows)
        bins = bins[valid]
        centres = rec.events.centres[valid]
        counts = np.bincount(bins, minlength=n_windows).astype(float)
        sums = np.zeros((n_windows, centres.shape[1]))
        np.add.at(sums, bins, centres)
        db_rows.append(scale * (sums - counts[:, np.newaxis] * anchors))
        count_blocks.append(counts)
    if not db_rows:
        raise InsufficientEventsError("no complete windows in the records")
    counts = np.concatenate(count_blocks)
    if counts.mean() < 30:
        raise InsufficientEventsError(
            f"windows average {counts.mean():.1f} hittings; "
            "need at least 30 for central-limit statistics"
        )
    return _moment_report(window, np.concatenate(db_rows, axis=0), counts)


def sample_factorized_db_windows(
    psi: StateVector,
    quantities: QuantitySet,
    beta: float,
    mu: float,
    window: float,
    n_windows: int,
    rng: np.random.Generator,
) -> DbMomentReport:
    """Window increments in the factorized (small-beta) regime.

    Draws each window's hitting centres independently from the exact
    density at the fixed state, which is the regime where the joint
    probability of consecutive centres factorizes. Chain feedback within
    a window adds a covariance contribution of order gamma * window^2
    that is not part of the limit statement; this harness isolates the
    limit itself.
    """
    n_hits = int(round(mu * window))
    if n_hits < 30:
        raise InsufficientEventsError(
            f"mu * window = {mu * window:.1f} hittings per window; need at least 30"
        )
    weights = quantities.born_weights(psi)
    table = quantities.eigenvalue_table
    num_q = quantities.num_quantities
    anchor = weights @ table
    cum = np.cumsum(weights)
    cum /= cum[-1]
    picks = np.searchsorted(cum, rng.random((n_windows, n_hits)))
    picks = np.minimum(picks, quantities.dim - 1)
    centres = table[picks]  # (windows, hits, K)
    centres = centres + rng.standard_normal((n_windows, n_hits, num_q)) * math.sqrt(
        1.0 / (2.0 * beta)
    )
    db = math.sqrt(2.0 * beta / mu) * (centres - anchor).sum(axis=1)
    counts = np.full(n_windows, float(n_hits))
    return _moment_report(window, db, counts)


# -- the infinite-frequency convergence sweep ----------------------------------


@dataclass
class SweepRow:
    """One frequency entry of the convergence study."""

    mu: float
    beta: float
    channel_distance: float
    mc_distance: float
    mc_error: float
    noise_floor: float


def _bootstrap_distance(
    rows_a: np.ndarray, rows_b: np.ndarray, n_boot: int, rng: np.random.Generator
) -> float:
    n_a, n_b = rows_a.shape[0], rows_b.shape[0]
    dists = np.empty(n_boot)
    for b in range(n_boot):
        ra = rows_a[rng.integers(0, n_a, n_a)]
        rb = rows_b[rng.integers(0, n_b, n_b)]
        dists[b] = trace_norm_distance(
            DensityMatrix.from_state_rows(ra), DensityMatrix.from_state_rows(rb)
        )
    return float(dists.std(ddof=1))


def convergence_sweep(
    psi0: StateVector,
    quantities: QuantitySet,
    gamma: float,
    mu_values,
    n_trajectories: int,
    t_probe: float,
    master_seed: int,
    *,
    dt: float | None = None,
    n_bootstrap: int = 100,
) -> list[SweepRow]:
    """Distance between the two processes as the hitting frequency grows.

    For each mu (sorted ascending) the accuracy is beta = 2 * gamma / mu,
    keeping the effectiveness fixed. Reports the deterministic channel
    distance (hitting master equation vs Lindblad at the probe time) and
    the trace-norm distance between the Monte Carlo ensembles, with a
    bootstrap error and an independent-halves noise-floor estimate.
    """
    from .ensemble import derive_seed

    mu_values = sorted(float(m) for m in mu_values)
    rho0 = DensityMatrix.from_state(psi0)
    d = quantities.dim
    step = dt if dt is not None else suggested_dt(quantities, gamma)
    n_sub = max(1, int(round(t_probe / step)))
    config = ContinuousConfig(
        gamma=gamma, dt=t_probe / n_sub, t_end=t_probe, record_interval=t_probe
    )
    cont_rng = np.random.default_rng(derive_seed(master_seed, 0))

    def noise_source(n_steps: int) -> np.ndarray:
        return cont_rng.standard_normal((n_trajectories, n_steps, quantities.num_quantities))

    psi_rows = np.tile(psi0.amplitudes, (n_trajectories, 1))
    cont = simulate_continuous_batch(
        psi_rows, None, quantities, config, noise_source, store_states=True
    )
    cont_rows = cont.states[-1]  # (n, d) computational basis
    rho_cont = DensityMatrix.from_state_rows(cont_rows)
    half = n_trajectories // 2
    floor = trace_norm_distance(
        DensityMatrix.from_state_rows(cont_rows[:half]),
        DensityMatrix.from_state_rows(cont_rows[half : 2 * half]),
    ) / 2.0

    _, lind = lindblad_evolution(rho0, quantities, gamma, t_probe)
    rho_lind = lind[-1]

    rows = []
    coeffs0 = np.tile(quantities.to_joint(psi0), (n_trajectories, 1))
    basis = quantities.joint_basis
    for i, mu in enumerate(mu_values, start=1):
        beta = 2.0 * gamma / mu
        _, master = hitting_master_evolution(rho0, quantities, beta, mu, t_probe)
        channel = trace_norm_distance(master[-1], rho_lind)

        hit_rng = np.random.default_rng(derive_seed(master_seed, i))
        counts = hit_rng.poisson(mu * t_probe, size=n_trajectories)
        chain = run_hitting_chain_batch(coeffs0, quantities, beta, counts, hit_rng)
        hit_rows = chain.coeffs @ basis.T
        mc = trace_norm_distance(DensityMatrix.from_state_rows(hit_rows), rho_cont)
        boot_rng = np.random.default_rng(derive_seed(master_seed, 1000 + i))
        err = _bootstrap_distance(hit_rows, cont_rows, n_bootstrap, boot_rng)
        rows.append(
            SweepRow(
                mu=mu,
                beta=beta,
                channel_distance=channel,
                mc_distance=mc,
                mc_error=err,
                noise_floor=floor,
            )
        )
    return rows


@dataclass
class EngineComparison:
    """Per-time distances between the two engines' ensembles."""

    times: np.ndarray
    mc_distance: np.ndarray
    mc_error: np.ndarray
    oracle_distance: np.ndarray


def engine_comparison(
    records_hitting: list[TrajectoryRecord],
    records_continuous: list[TrajectoryRecord],
    quantities: QuantitySet,
    beta: float,
    mu: float,
    gamma: float,
    *,
    hamiltonian: Hamiltonian | None = None,
    psi0: StateVector | None = None,
    n_bootstrap: int = 50,
    seed: int = 0,
) -> EngineComparison:
    """Trace-norm distances per probe time, with bootstrap errors."""
    times = records_hitting[0].sample_times
    rng = np.random.default_rng(seed)
    mc = np.empty(times.size)
    err = np.empty(times.size)
    for i, t in enumerate(times):
        rows_h = np.stack([rec.state_at(t) for rec in records_hitting])
        rows_c = np.stack([rec.state_at(t) for rec in records_continuous])
        mc[i] = trace_norm_distance(
            DensityMatrix.from_state_rows(rows_h), DensityMatrix.from_state_rows(rows_c)
        )
        err[i] = _bootstrap_distance(rows_h, rows_c, n_bootstrap, rng)
    oracle = np.zeros(times.size)
    if psi0 is not None:
        rho0 = DensityMatrix.from_state(psi0)
        inner = times.copy()
        inner[0] = 0.0
        _, master = hitting_master_evolution(
            rho0, quantities, beta, mu, float(times[-1]),
            hamiltonian=hamiltonian, sample_times=inner,
        )
        _, lind = lindblad_evolution(
            rho0, quantities, gamma, float(times[-1]),
            hamiltonian=hamiltonian, sample_times=inner,
        )
        oracle = np.array(
            [trace_norm_distance(m, l) for m, l in zip(master, lind)]
        )
    return EngineComparison(times=times, mc_distance=mc, mc_error=err, oracle_distance=oracle)
