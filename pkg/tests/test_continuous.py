import math

import numpy as np
import pytest

from conftest import SQ2, random_state
from qreduce.errors import StepRejectedError
from qreduce.hilbert import Hamiltonian, StateVector, validate_quantity_set
from qreduce.continuous import (
    ContinuousConfig,
    WienerIncrement,
    sde_step,
    simulate_continuous_trajectory,
    strength_from_hitting,
    suggested_dt,
)
from qreduce.ensemble import run_continuous_ensemble

SX = np.array([[0, 1], [1, 0]], dtype=complex)


class TestStrengthFromHitting:
    def test_arithmetic(self):
        assert strength_from_hitting(0.01, 100.0) == pytest.approx(0.5)

    def test_round_trip(self):
        gamma, mu = 0.37, 12.0
        assert strength_from_hitting(2 * gamma / mu, mu) == pytest.approx(gamma)

    def test_per_particle_variant(self):
        # localization accuracy alpha and frequency lambda give alpha*lambda/2
        alpha, lam = 1.5, 0.2
        assert strength_from_hitting(alpha, lam) == pytest.approx(alpha * lam / 2)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            strength_from_hitting(0.0, 1.0)


class TestSdeStep:
    def test_eigenvector_fixed_point_any_increment(self, three_level_set):
        psi = StateVector([0.0, 1.0, 0.0])
        for db in ([0.5], [-2.0], [0.0]):
            out = sde_step(psi, three_level_set, None, 1.3, 1e-3, np.array(db))
            assert np.allclose(out.amplitudes, psi.amplitudes, atol=1e-12)

    def test_zero_strength_is_first_order_unitary(self, sigma_z_set):
        # gamma -> 0 equivalent: tiny gamma with zero increment, Hamiltonian on
        psi = StateVector([1.0, 0.0])
        dt = 1e-3
        ham = Hamiltonian(SX)
        out = sde_step(psi, sigma_z_set, ham, 1e-30, dt, np.zeros(1))
        exact = np.cos(dt) * psi.amplitudes - 1j * np.sin(dt) * (SX @ psi.amplitudes)
        assert np.max(np.abs(out.amplitudes - exact)) < 2 * dt**2

    def test_single_step_weight_shift(self, sigma_z_set, equal_qubit):
        gamma, dt = 1.0, 1e-4
        db = math.sqrt(dt)
        out = sde_step(equal_qubit, sigma_z_set, None, gamma, dt, np.array([db]))
        w0 = abs(out.amplitudes[0]) ** 2
        up = 0.5 * (1 + math.sqrt(gamma) * db) ** 2
        down = 0.5 * (1 - math.sqrt(gamma) * db) ** 2
        assert w0 == pytest.approx(up / (up + down), abs=20 * dt**1.5)

    def test_wiener_increment_draw(self):
        rng = np.random.default_rng(0)
        inc = WienerIncrement.draw(rng, dt=0.25, num_quantities=3)
        assert inc.dB.shape == (3,)


class TestSimulateContinuous:
    def test_eigenvector_constant(self, sigma_z_set):
        psi = StateVector([1.0, 0.0])
        cfg = ContinuousConfig(gamma=2.0, dt=1e-3, t_end=1.0, record_interval=0.25)
        rec = simulate_continuous_trajectory(psi, None, sigma_z_set, cfg, 4)
        assert np.allclose(rec.born_weights, rec.born_weights[0], atol=1e-10)
        assert len(rec.events) == 0

    def test_unit_norm_records(self, sigma_z_set, equal_qubit):
        cfg = ContinuousConfig(gamma=1.0, dt=1e-3, t_end=1.0, record_interval=0.25)
        rec = simulate_continuous_trajectory(
            equal_qubit, None, sigma_z_set, cfg, 8, store_states=True
        )
        for state in rec.states:
            assert np.sum(np.abs(state) ** 2) == pytest.approx(1.0, abs=1e-12)

    def test_collapse_fractions_match_born_weights(self, three_level_set):
        psi = StateVector([0.5, 0.5, SQ2])
        cfg = ContinuousConfig(gamma=1.0, dt=2e-3, t_end=12.0, record_interval=12.0)
        records = run_continuous_ensemble(psi, None, three_level_set, cfg, 1200, 17)
        terminal = np.stack([r.born_weights[-1] for r in records])
        winners = terminal.argmax(axis=1)
        resolved = terminal.max(axis=1) > 0.999
        assert resolved.mean() > 0.98
        for level, weight in enumerate((0.25, 0.25, 0.5)):
            frac = np.mean(winners[resolved] == level)
            se = math.sqrt(weight * (1 - weight) / resolved.sum())
            assert abs(frac - weight) < 4 * se

    def test_rabi_with_split_step(self, sigma_z_set):
        psi = StateVector([1.0, 0.0])
        ham = Hamiltonian(SX)
        cfg = ContinuousConfig(
            gamma=1e-30, dt=1e-3, t_end=1.0, record_interval=0.25,
            split_hamiltonian=True,
        )
        rec = simulate_continuous_trajectory(psi, ham, sigma_z_set, cfg, 4)
        for t, w in zip(rec.sample_times, rec.born_weights):
            assert w[0] == pytest.approx(math.cos(t) ** 2, abs=1e-9)

    def test_step_rejected_for_huge_dt(self, sigma_z_set, equal_qubit):
        cfg = ContinuousConfig(gamma=200.0, dt=0.5, t_end=1.0, record_interval=0.5)
        with pytest.raises(StepRejectedError):
            simulate_continuous_trajectory(equal_qubit, None, sigma_z_set, cfg, 1)

    def test_suggested_dt_bound(self, sigma_z_set):
        dt = suggested_dt(sigma_z_set, 0.5)
        assert 0.5 * sigma_z_set.spectral_spread() * dt <= 0.010000001


class TestEnsembleProperties:
    def test_martingale_mean_weights(self, sigma_z_set, equal_qubit):
        cfg = ContinuousConfig(gamma=0.5, dt=2e-3, t_end=2.0, record_interval=0.25)
        records = run_continuous_ensemble(equal_qubit, None, sigma_z_set, cfg, 2000, 23)
        weights = np.stack([r.born_weights for r in records])  # (n, s, d)
        mean = weights.mean(axis=0)
        se = weights.std(axis=0, ddof=1) / math.sqrt(weights.shape[0])
        drift = np.abs(mean[1:] - mean[0]) / np.maximum(se[1:], 1e-12)
        assert drift.max() < 4.0

    def test_variance_growth_includes_initial_slope(self, sigma_z_set, equal_qubit):
        # Var[<A>] grows like 4 * gamma * (quantum variance)^2 * t at short times
        gamma = 0.5
        cfg = ContinuousConfig(gamma=gamma, dt=5e-4, t_end=0.05, record_interval=0.005)
        records = run_continuous_ensemble(equal_qubit, None, sigma_z_set, cfg, 20000, 29)
        expectations = np.stack([r.expectations[:, 0] for r in records])
        variances = expectations.var(axis=0, ddof=1)
        times = records[0].sample_times
        slope = np.polyfit(times, variances, 1)[0]
        assert slope == pytest.approx(4 * gamma * 1.0**2, rel=0.10)

    def test_weak_order_one_halving(self, sigma_z_set, equal_qubit):
        # terminal off-diagonal of the ensemble statistical operator vs the
        # closed form; halving dt should roughly halve the bias
        from qreduce.equivalence import DensityMatrix, lindblad_evolution, trace_norm_distance

        gamma, t_end, n = 0.5, 1.0, 60000
        _, oracle = lindblad_evolution(
            DensityMatrix.from_state(equal_qubit), sigma_z_set, gamma, t_end
        )
        errors = {}
        for dt in (0.1, 0.05):
            cfg = ContinuousConfig(gamma=gamma, dt=dt, t_end=t_end, record_interval=t_end)
            records = run_continuous_ensemble(
                equal_qubit, None, sigma_z_set, cfg, n, 31, store_states=True
            )
            rows = np.stack([r.states[-1] for r in records])
            rho = DensityMatrix.from_state_rows(rows)
            errors[dt] = abs(rho.rho[0, 1].real - oracle[-1].rho[0, 1].real)
        noise = 1.0 / (2 * math.sqrt(n))
        assert errors[0.05] <= 0.65 * errors[0.1] + 3 * noise
