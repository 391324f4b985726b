"""Reproducible parallel ensembles.

A trajectory is a pure function of its inputs and its seed, and every
per-trajectory seed is derived by hashing (master seed, stream tag,
trajectory index). Work is split into fixed-size chunks independent of
the worker count and reassembled in index order, so results are
bit-identical for any number of workers.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .continuous import ContinuousConfig, simulate_continuous_batch
from .hilbert import Hamiltonian, QuantitySet, StateVector
from .hitting import (
    HitStream,
    HittingConfig,
    simulate_hitting_trajectory,
    simulate_multistream_hitting_trajectory,
)
from .trajectory import EventLog, TrajectoryRecord

# One chunk is the unit of parallel work; constant so that chunk
# boundaries (and hence any batched arithmetic) never depend on the
# worker count.
CHUNK_SIZE = 512

HITTING_STREAM = 0
CONTINUOUS_STREAM = 1
SWEEP_STREAM = 2

__all__ = [
    "derive_seed",
    "trajectory_seeds",
    "run_hitting_ensemble",
    "run_multistream_hitting_ensemble",
    "run_continuous_ensemble",
]


def derive_seed(master_seed: int, *path: int) -> int:
    """Hash a master seed and an index path into an independent 64-bit seed."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def trajectory_seeds(master_seed: int, stream_tag: int, n: int) -> np.ndarray:
    return np.array(
        [derive_seed(master_seed, stream_tag, i) for i in range(n)], dtype=np.uint64
    )


def _chunks(n: int):
    for start in range(0, n, CHUNK_SIZE):
        yield start, min(start + CHUNK_SIZE, n)


def _run_chunked(worker, payloads, workers: int):
    if workers <= 1 or len(payloads) <= 1:
        results = [worker(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(worker, payloads))
    out = []
    for chunk in results:
        out.extend(chunk)
    return out


def _hitting_chunk(payload) -> list[TrajectoryRecord]:
    psi0, hamiltonian, quantities, config, seeds, store_states = payload
    return [
        simulate_hitting_trajectory(
            psi0, hamiltonian, quantities, config, int(seed), store_states=store_states
        )
        for seed in seeds
    ]


def run_hitting_ensemble(
    psi0: StateVector,
    hamiltonian: Hamiltonian | None,
    quantities: QuantitySet,
    config: HittingConfig,
    n_trajectories: int,
    master_seed: int,
    *,
    workers: int = 1,
    store_states: bool = False,
    stream_tag: int = HITTING_STREAM,
) -> list[TrajectoryRecord]:
    """Independent hitting trajectories with derived per-trajectory seeds."""
    seeds = trajectory_seeds(master_seed, stream_tag, n_trajectories)
    payloads = [
        (psi0, hamiltonian, quantities, config, seeds[a:b], store_states)
        for a, b in _chunks(n_trajectories)
    ]
    return _run_chunked(_hitting_chunk, payloads, workers)


def _multistream_chunk(payload) -> list[TrajectoryRecord]:
    psi0, hamiltonian, quantities, streams, t_end, record_interval, seeds, store_states = payload
    return [
        simulate_multistream_hitting_trajectory(
            psi0,
            hamiltonian,
            quantities,
            streams,
            t_end,
            record_interval,
            int(seed),
            store_states=store_states,
        )
        for seed in seeds
    ]


def run_multistream_hitting_ensemble(
    psi0: StateVector,
    hamiltonian: Hamiltonian | None,
    quantities: QuantitySet,
    streams: list[HitStream],
    t_end: float,
    record_interval: float,
    n_trajectories: int,
    master_seed: int,
    *,
    workers: int = 1,
    store_states: bool = False,
    stream_tag: int = HITTING_STREAM,
) -> list[TrajectoryRecord]:
    seeds = trajectory_seeds(master_seed, stream_tag, n_trajectories)
    payloads = [
        (psi0, hamiltonian, quantities, streams, t_end, record_interval,
         seeds[a:b], store_states)
        for a, b in _chunks(n_trajectories)
    ]
    return _run_chunked(_multistream_chunk, payloads, workers)


def _continuous_chunk(payload) -> list[TrajectoryRecord]:
    psi0, hamiltonian, quantities, config, seeds, store_states = payload
    num_q = quantities.num_quantities
    generators = [np.random.default_rng(int(s)) for s in seeds]

    def noise_source(n_steps: int) -> np.ndarray:
        # One stream per trajectory: the noise a trajectory sees depends
        # only on its own seed, never on which chunk it landed in.
        return np.stack([g.standard_normal((n_steps, num_q)) for g in generators])

    rows = np.tile(psi0.amplitudes, (len(seeds), 1))
    result = simulate_continuous_batch(
        rows,
        hamiltonian,
        quantities,
        config,
        noise_source,
        store_states=store_states,
        seeds=np.asarray(seeds),
    )
    records = []
    for i, seed in enumerate(seeds):
        states = None
        if result.states is not None:
            states = [np.array(s) for s in result.states[:, i, :]]
            for s in states:
                s.flags.writeable = False
        records.append(
            TrajectoryRecord(
                sample_times=result.sample_times,
                born_weights=result.weights[:, i, :],
                expectations=result.expectations[:, i, :],
                events=EventLog(num_quantities=num_q),
                seed=int(seed),
                states=states,
            )
        )
    return records


def run_continuous_ensemble(
    psi0: StateVector,
    hamiltonian: Hamiltonian | None,
    quantities: QuantitySet,
    config: ContinuousConfig,
    n_trajectories: int,
    master_seed: int,
    *,
    workers: int = 1,
    store_states: bool = False,
    stream_tag: int = CONTINUOUS_STREAM,
) -> list[TrajectoryRecord]:
    """Diffusive ensemble, integrated in fixed-size vectorized chunks."""
    seeds = trajectory_seeds(master_seed, stream_tag, n_trajectories)
    payloads = [
        (psi0, hamiltonian, quantities, config, seeds[a:b], store_states)
        for a, b in _chunks(n_trajectories)
    ]
    return _run_chunked(_continuous_chunk, payloads, workers)
