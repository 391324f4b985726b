"""The continuous diffusive reduction process.

An Ito stochastic differential equation drives the state toward joint
eigenvectors of the quantity set:

    d|psi> = [ -(i/hbar) H dt
               + sum_p sqrt(g_p) (A_p - <A_p>) dB_p
               - 1/2 sum_p g_p (A_p - <A_p>)^2 dt ] |psi>

integrated by Euler-Maruyama with per-step renormalization. The
expectation <A_p> is always evaluated at the pre-step state (Ito
convention; a midpoint reading would change the drift). The strength is
a scalar or one value per quantity, and equals beta*mu/2 of the parent
hitting process in the infinite-frequency limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, StepRejectedError
from .hilbert import Hamiltonian, QuantitySet, StateVector
from .trajectory import EventLog, TrajectoryRecord, record_grid

__all__ = [
    "ContinuousConfig",
    "WienerIncrement",
    "strength_from_hitting",
    "suggested_dt",
    "sde_step",
    "simulate_continuous_trajectory",
]


def strength_from_hitting(beta: float, mu: float) -> float:
    """Strength of the continuous process equivalent to a hitting process.

    The effectiveness of a hitting process depends on accuracy and
    frequency only through their product: gamma = beta * mu / 2. The same
    formula gives the per-particle strength alpha * lambda_l / 2 in the
    distinguishable-particle model.
    """
    if beta <= 0 or mu <= 0:
        raise ValueError("beta and mu must be > 0")
    return beta * mu / 2.0


def suggested_dt(quantities: QuantitySet, gamma) -> float:
    """Step size keeping gamma * (spectral spread) * dt at or below 0.01."""
    g = float(np.max(np.asarray(gamma, dtype=float)))
    spread = quantities.spectral_spread()
    if g * spread <= 0:
        return 1e-2
    return 0.01 / (g * spread)


@dataclass(frozen=True)
class ContinuousConfig:
    """Integration parameters for the diffusive process.

    ``gamma`` may be a scalar or a per-quantity sequence. The record
    interval must be an integer multiple of ``dt`` so both engines share
    one sample grid.
    """

    gamma: float | tuple[float, ...]
    dt: float
    t_end: float
    record_interval: float
    renormalize_each_step: bool = True
    split_hamiltonian: bool = False

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if np.any(g <= 0):
            raise ValueError("gamma must be > 0")
        object.__setattr__(
            self, "gamma", float(g[0]) if g.size == 1 else tuple(float(x) for x in g)
        )
        for name in ("dt", "t_end", "record_interval"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.dt > self.record_interval:
            raise ValueError("dt must not exceed record_interval")
        if self.record_interval > self.t_end:
            raise ValueError("record_interval must not exceed t_end")
        ratio = self.record_interval / self.dt
        if abs(ratio - round(ratio)) > 1e-6:
            raise ValueError("record_interval must be an integer multiple of dt")

    def gamma_vector(self, num_quantities: int) -> np.ndarray:
        g = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if g.size == 1:
            return np.full(num_quantities, g[0])
        if g.size != num_quantities:
            raise DimensionMismatchError(
                f"gamma has {g.size} components for {num_quantities} quantities"
            )
        return g

    @property
    def steps_per_record(self) -> int:
        return max(1, int(round(self.record_interval / self.dt)))


@dataclass(frozen=True)
class WienerIncrement:
    """Independent Gaussian increments, one per quantity, variance dt."""

    dB: np.ndarray

    @classmethod
    def draw(cls, rng: np.random.Generator, dt: float, num_quantities: int):
        return cls(dB=rng.standard_normal(num_quantities) * math.sqrt(dt))


def sde_step(
    psi: StateVector,
    quantities: QuantitySet,
    hamiltonian: Hamiltonian | None,
    gamma,
    dt: float,
    dB,
    *,
    renormalize: bool = True,
) -> StateVector:
    """One Euler-Maruyama update of the diffusive process.

    ``dB`` is a length-K array of Wiener increments (variance dt each) or
    a :class:`WienerIncrement`. Joint eigenvectors are exact fixed points
    when ``hamiltonian`` is None: every centred operator annihilates them.
    """
    increments = dB.dB if isinstance(dB, WienerIncrement) else np.asarray(dB, dtype=float)
    if increments.shape != (quantities.num_quantities,):
        raise DimensionMismatchError(
            f"dB must have shape ({quantities.num_quantities},), got {increments.shape}"
        )
    g = np.full(quantities.num_quantities, gamma, dtype=float) if np.isscalar(gamma) \
        else np.asarray(gamma, dtype=float)
    if g.shape != (quantities.num_quantities,):
        raise DimensionMismatchError("gamma vector length must match the quantity set")

    amps = psi.amplitudes
    delta = np.zeros_like(amps)
    for p in range(quantities.num_quantities):
        centred = quantities.operators[p] @ amps - quantities.expectation(psi, p) * amps
        delta += math.sqrt(g[p]) * increments[p] * centred
        centred2 = quantities.operators[p] @ centred - quantities.expectation(psi, p) * centred
        delta -= 0.5 * g[p] * dt * centred2
    if hamiltonian is not None:
        delta += (-1j * dt / hamiltonian.hbar) * (hamiltonian.matrix @ amps)
    out = amps + delta
    if renormalize:
        return StateVector(out, normalize=True)
    return StateVector(out, tol=math.inf)


class _DiffusionKernel:
    """Precomputed joint-basis data for the integration loop."""

    def __init__(
        self,
        quantities: QuantitySet,
        hamiltonian: Hamiltonian | None,
        config: ContinuousConfig,
    ):
        self.table = quantities.eigenvalue_table
        self.gamma = config.gamma_vector(quantities.num_quantities)
        self.sqrt_gamma = np.sqrt(self.gamma)
        self.dt = config.dt
        self.renormalize = config.renormalize_each_step
        self.split = config.split_hamiltonian
        self.h_joint = None
        self.h_prop = None
        if hamiltonian is not None:
            if hamiltonian.dim != quantities.dim:
                raise DimensionMismatchError(
                    "hamiltonian dimension does not match the quantity set"
                )
            basis = quantities.joint_basis
            hj = basis.conj().T @ hamiltonian.matrix @ basis
            hj = (hj + hj.conj().T) / 2.0
            if self.split:
                w, u = np.linalg.eigh(hj)
                phases = np.exp(-1j * w * config.dt / hamiltonian.hbar)
                self.h_prop = np.ascontiguousarray((u * phases) @ u.conj().T)
            else:
                self.h_joint = np.ascontiguousarray(
                    (-1j * config.dt / hamiltonian.hbar) * hj
                )

    def step_batch(self, coeffs: np.ndarray, increments: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Advance every row by one step; returns (new coeffs, norm ratios).

        ``coeffs``: (batch, d) joint-basis rows. ``increments``: (batch, K)
        Wiener increments of variance dt. Norm ratios are pre-renormalization,
        for step-rejection checks.
        """
        weights = np.abs(coeffs) ** 2
        norms2 = weights.sum(axis=1)
        means = (weights @ self.table) / norms2[:, np.newaxis]
        offsets = self.table[np.newaxis, :, :] - means[:, np.newaxis, :]
        noise = np.einsum("bdk,bk->bd", offsets, increments * self.sqrt_gamma[np.newaxis, :])
        drift = -0.5 * self.dt * np.einsum("bdk,k->bd", offsets**2, self.gamma)
        out = coeffs * (1.0 + noise + drift)
        if self.h_joint is not None:
            out = out + coeffs @ self.h_joint.T
        if self.h_prop is not None:
            out = out @ self.h_prop.T
        new_norms2 = np.sum(np.abs(out) ** 2, axis=1)
        ratios = np.sqrt(new_norms2 / norms2)
        if self.renormalize:
            out = out / np.sqrt(new_norms2)[:, np.newaxis]
        return out, ratios


@dataclass
class BatchResult:
    """Vectorized ensemble output on the shared record grid."""

    sample_times: np.ndarray
    weights: np.ndarray        # (samples, batch, d)
    expectations: np.ndarray   # (samples, batch, K)
    states: np.ndarray | None  # (samples, batch, d) computational basis
    max_norm_drift: float


def simulate_continuous_batch(
    psi0_rows: np.ndarray,
    hamiltonian: Hamiltonian | None,
    quantities: QuantitySet,
    config: ContinuousConfig,
    noise_source,
    *,
    store_states: bool = False,
    seeds: np.ndarray | None = None,
) -> BatchResult:
    """Integrate a batch of trajectories in lockstep.

    ``psi0_rows`` is (batch, d) in the computational basis.
    ``noise_source(n_steps)`` must yield (batch, n_steps, K) standard
    normal blocks, one stream per row, so results are independent of the
    batch partition. Raises :class:`StepRejectedError` if any single step
    changes a norm by more than 50%.
    """
    kernel = _DiffusionKernel(quantities, hamiltonian, config)
    basis = quantities.joint_basis
    coeffs = psi0_rows @ basis.conj()
    table = kernel.table
    rec_times = record_grid(config.t_end, config.record_interval)
    steps_per_record = config.steps_per_record
    total_steps = (rec_times.size - 1) * steps_per_record
    sqrt_dt = math.sqrt(config.dt)

    batch = coeffs.shape[0]
    weights_out = np.empty((rec_times.size, batch, quantities.dim))
    expect_out = np.empty((rec_times.size, batch, quantities.num_quantities))
    states_out = (
        np.empty((rec_times.size, batch, quantities.dim), dtype=np.complex128)
        if store_states
        else None
    )

    def record(slot: int):
        w = np.abs(coeffs) ** 2
        w /= w.sum(axis=1)[:, np.newaxis]
        weights_out[slot] = w
        expect_out[slot] = w @ table
        if states_out is not None:
            states_out[slot] = coeffs @ basis.T

    record(0)
    max_drift = 0.0
    block = 256
    step = 0
    while step < total_steps:
        n = min(block, total_steps - step)
        noise = noise_source(n) * sqrt_dt
        for i in range(n):
            coeffs, ratios = kernel.step_batch(coeffs, noise[:, i, :])
            drift = float(np.max(np.abs(ratios - 1.0)))
            max_drift = max(max_drift, drift)
            if drift > 0.5:
                bad = int(np.argmax(np.abs(ratios - 1.0)))
                seed = None if seeds is None else int(seeds[bad])
                raise StepRejectedError(
                    f"step changed a norm by {drift:.2f} (>50%); dt too large",
                    seed=seed,
                )
            step += 1
            if step % steps_per_record == 0:
                record(step // steps_per_record)

    return BatchResult(
        sample_times=rec_times,
        weights=weights_out,
        expectations=expect_out,
        states=states_out,
        max_norm_drift=max_drift,
    )


def simulate_continuous_trajectory(
    psi0: StateVector,
    hamiltonian: Hamiltonian | None,
    quantities: QuantitySet,
    config: ContinuousConfig,
    rng,
    *,
    store_states: bool = False,
    seed: int | None = None,
) -> TrajectoryRecord:
    """One realization of the diffusive process on the record grid.

    ``rng`` may be an integer seed (stored on the record) or a
    ``numpy.random.Generator``. The events list is always empty.
    """
    from .hitting import _coerce_rng

    rng, seed = _coerce_rng(rng, seed)
    num_q = quantities.num_quantities

    def noise_source(n_steps: int) -> np.ndarray:
        return rng.standard_normal((1, n_steps, num_q))

    result = simulate_continuous_batch(
        psi0.amplitudes[np.newaxis, :],
        hamiltonian,
        quantities,
        config,
        noise_source,
        store_states=store_states,
        seeds=None if seed is None else np.array([seed]),
    )
    states = None
    if result.states is not None:
        states = [np.array(s) for s in result.states[:, 0, :]]
        for s in states:
            s.flags.writeable = False
    return TrajectoryRecord(
        sample_times=result.sample_times,
        born_weights=result.weights[:, 0, :],
        expectations=result.expectations[:, 0, :],
        events=EventLog(num_quantities=num_q),
        seed=seed,
        states=states,
    )
