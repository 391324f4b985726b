import numpy as np
import pytest

from qreduce.hilbert import StateVector
from qreduce.hitting import HittingConfig
from qreduce.continuous import ContinuousConfig
from qreduce.ensemble import (
    derive_seed,
    run_continuous_ensemble,
    run_hitting_ensemble,
    trajectory_seeds,
)


class TestSeedDerivation:
    def test_deterministic_and_distinct(self):
        a = derive_seed(123, 0, 5)
        b = derive_seed(123, 0, 5)
        c = derive_seed(123, 0, 6)
        d = derive_seed(124, 0, 5)
        assert a == b
        assert len({a, c, d}) == 3

    def test_trajectory_seeds_shape(self):
        seeds = trajectory_seeds(9, 1, 10)
        assert seeds.shape == (10,)
        assert len(set(seeds.tolist())) == 10


def _weights_matrix(records):
    return np.stack([r.born_weights for r in records])


class TestWorkerIndependence:
    def test_hitting_identical_across_worker_counts(self, sigma_z_set, equal_qubit):
        cfg = HittingConfig(beta=0.5, mu=5.0, t_end=1.0, record_interval=0.5)
        serial = run_hitting_ensemble(equal_qubit, None, sigma_z_set, cfg, 600, 7, workers=1)
        parallel = run_hitting_ensemble(equal_qubit, None, sigma_z_set, cfg, 600, 7, workers=4)
        assert np.array_equal(_weights_matrix(serial), _weights_matrix(parallel))
        for a, b in zip(serial, parallel):
            assert np.array_equal(a.events.times, b.events.times)
            assert np.array_equal(a.events.centres, b.events.centres)
            assert a.seed == b.seed

    def test_continuous_identical_across_worker_counts(self, sigma_z_set, equal_qubit):
        cfg = ContinuousConfig(gamma=0.5, dt=1e-2, t_end=1.0, record_interval=0.5)
        serial = run_continuous_ensemble(
            equal_qubit, None, sigma_z_set, cfg, 600, 7, workers=1
        )
        parallel = run_continuous_ensemble(
            equal_qubit, None, sigma_z_set, cfg, 600, 7, workers=4
        )
        assert np.array_equal(_weights_matrix(serial), _weights_matrix(parallel))

    def test_trajectory_depends_only_on_its_seed(self, sigma_z_set, equal_qubit):
        # growing the ensemble must not change earlier trajectories
        cfg = ContinuousConfig(gamma=0.5, dt=1e-2, t_end=1.0, record_interval=0.5)
        small = run_continuous_ensemble(equal_qubit, None, sigma_z_set, cfg, 100, 7)
        large = run_continuous_ensemble(equal_qubit, None, sigma_z_set, cfg, 700, 7)
        assert np.array_equal(_weights_matrix(small), _weights_matrix(large)[:100])


class TestRecordShape:
    def test_records_share_the_grid(self, sigma_z_set, equal_qubit):
        cfg = HittingConfig(beta=0.5, mu=5.0, t_end=2.0, record_interval=0.25)
        records = run_hitting_ensemble(equal_qubit, None, sigma_z_set, cfg, 20, 3)
        times = records[0].sample_times
        assert times[0] == 0.0 and times[-1] == pytest.approx(2.0)
        for rec in records[1:]:
            assert np.array_equal(rec.sample_times, times)
