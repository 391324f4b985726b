"""Trajectory recording shared by both reduction engines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class HittingEvent:
    """One sharpening event: its time and the sampled centre in R^K."""

    time: float
    centre: np.ndarray

    def __post_init__(self):
        centre = np.asarray(self.centre, dtype=float).reshape(-1)
        centre.flags.writeable = False
        object.__setattr__(self, "centre", centre)


class EventLog:
    """Columnar store of hitting events (times plus centre rows).

    Keeps large ensembles cheap; iterating yields
    :class:`HittingEvent` views.
    """

    __slots__ = ("times", "centres")

    def __init__(self, times=None, centres=None, num_quantities: int = 1):
        if times is None:
            times = np.empty(0)
            centres = np.empty((0, num_quantities))
        self.times = np.asarray(times, dtype=float)
        self.centres = np.asarray(centres, dtype=float)
        if self.centres.ndim == 1:
            self.centres = self.centres.reshape(-1, 1)
        if self.centres.shape[0] != self.times.size:
            raise ValueError("event times and centres disagree in length")
        self.times.flags.writeable = False
        self.centres.flags.writeable = False

    def __len__(self) -> int:
        return self.times.size

    def __iter__(self):
        for t, row in zip(self.times, self.centres):
            yield HittingEvent(float(t), row)

    def __getitem__(self, idx: int) -> HittingEvent:
        return HittingEvent(float(self.times[idx]), self.centres[idx])

    def in_window(self, start: float, stop: float) -> np.ndarray:
        """Indices of events with start < t <= stop."""
        return np.nonzero((self.times > start) & (self.times <= stop))[0]


@dataclass
class TrajectoryRecord:
    """Time series of one stochastic realization.

    ``born_weights`` and ``expectations`` are always present, one row per
    sample time; full state snapshots are kept only when requested.
    ``events`` is empty for the diffusive engine.
    """

    sample_times: np.ndarray
    born_weights: np.ndarray
    expectations: np.ndarray
    events: EventLog
    seed: int | None = None
    states: list[np.ndarray] | None = None
    _weight_tol: float = field(default=1e-10, repr=False)

    def __post_init__(self):
        self.sample_times = np.asarray(self.sample_times, dtype=float)
        self.born_weights = np.asarray(self.born_weights, dtype=float)
        self.expectations = np.asarray(self.expectations, dtype=float)
        if np.any(np.diff(self.sample_times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        sums = self.born_weights.sum(axis=1)
        worst = float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0
        if worst > self._weight_tol:
            raise ValueError(f"born-weight rows deviate from 1 by {worst:.3e}")

    @property
    def num_samples(self) -> int:
        return self.sample_times.size

    @property
    def dim(self) -> int:
        return self.born_weights.shape[1]

    def sample_index(self, t: float, *, tol: float = 1e-9) -> int:
        idx = int(np.argmin(np.abs(self.sample_times - t)))
        if abs(self.sample_times[idx] - t) > tol:
            raise KeyError(f"no sample at t={t}")
        return idx

    def state_at(self, t: float) -> np.ndarray:
        from .errors import MissingSnapshotError

        if self.states is None:
            raise MissingSnapshotError("trajectory was recorded without snapshots")
        return self.states[self.sample_index(t)]

    def events_between(self, start: float, stop: float) -> int:
        return int(np.count_nonzero((self.events.times > start) & (self.events.times <= stop)))


def record_grid(t_end: float, record_interval: float) -> np.ndarray:
    """Sample times 0, r, 2r, ... capped at t_end (t_end included when hit)."""
    n = int(np.floor(t_end / record_interval + 1e-9))
    times = np.arange(n + 1) * record_interval
    times[-1] = min(times[-1], t_end)
    return times
