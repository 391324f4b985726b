import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.stats import poisson

from conftest import SQ2, random_unitary
from qreduce.errors import InsufficientEventsError, MissingSnapshotError
from qreduce.hilbert import Hamiltonian, StateVector, validate_quantity_set
from qreduce.hitting import HittingConfig, Schedule, sharpening_operator, simulate_hitting_trajectory
from qreduce.continuous import ContinuousConfig
from qreduce.ensemble import run_continuous_ensemble, run_hitting_ensemble
from qreduce.equivalence import (
    DensityMatrix,
    collapse_statistics,
    convergence_sweep,
    db_statistics,
    ensemble_density_matrix,
    ensemble_stats,
    exact_hitting_map,
    factorization_check,
    group_eigenvalue_rows,
    hitting_master_evolution,
    lindblad_evolution,
    sample_factorized_db_windows,
    trace_norm_distance,
    wilson_interval,
)
from qreduce.hitting import run_evenly_spaced_ensemble

SX = np.array([[0, 1], [1, 0]], dtype=complex)


@pytest.fixture(scope="module")
def plus_rho(equal_qubit):
    return DensityMatrix.from_state(equal_qubit)


class TestDensityMatrix:
    def test_validation(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.diag([0.9, 0.3]))
        with pytest.raises(ValueError):
            DensityMatrix(np.array([[0.5, 0.5], [-0.5, 0.5]]))

    def test_from_rows_trace_one(self):
        rows = np.array([[1.0, 0.0], [SQ2, SQ2]], dtype=complex)
        rho = DensityMatrix.from_state_rows(rows)
        assert np.trace(rho.rho).real == pytest.approx(1.0, abs=1e-12)

    def test_trace_norm_distance_offdiagonal(self):
        a = DensityMatrix(np.array([[0.5, 0.2], [0.2, 0.5]]))
        b = DensityMatrix(np.array([[0.5, 0.1], [0.1, 0.5]]))
        assert trace_norm_distance(a, b) == pytest.approx(0.2)


class TestExactHittingMap:
    def test_diagonal_invariant(self, sigma_z_set):
        rho = DensityMatrix(np.diag([0.3, 0.7]).astype(complex))
        out = exact_hitting_map(rho, sigma_z_set, 0.5)
        assert np.allclose(out.rho, rho.rho, atol=1e-14)

    def test_qubit_damping_factor(self, sigma_z_set, plus_rho):
        out = exact_hitting_map(plus_rho, sigma_z_set, 0.1)
        assert out.rho[0, 1].real == pytest.approx(0.5 * 0.9048374180359595, abs=1e-12)

    def test_small_beta_is_identity(self, sigma_z_set, plus_rho):
        out = exact_hitting_map(plus_rho, sigma_z_set, 1e-14)
        assert np.allclose(out.rho, plus_rho.rho, atol=1e-12)

    def test_brute_force_quadrature_agreement(self, sigma_z_set, plus_rho):
        # independent oracle: trapezoid quadrature of the centre integral
        beta = 0.37
        grid = np.linspace(-60.0, 60.0, 24001)
        da = grid[1] - grid[0]
        acc = np.zeros((2, 2), dtype=complex)
        for a in grid:
            s = sharpening_operator(sigma_z_set, [a], beta)
            acc += s @ plus_rho.rho @ s * da
        mapped = exact_hitting_map(plus_rho, sigma_z_set, beta)
        assert np.max(np.abs(acc - mapped.rho)) < 1e-6

    def test_rotated_basis(self):
        rng = np.random.default_rng(5)
        u = random_unitary(rng, 2)
        qs = validate_quantity_set([u @ np.diag([1.0, -1.0]) @ u.conj().T])
        psi = StateVector(u @ np.array([SQ2, SQ2]))
        rho = DensityMatrix.from_state(psi)
        out = exact_hitting_map(rho, qs, 0.1)
        joint = qs.joint_basis.conj().T @ out.rho @ qs.joint_basis
        assert abs(joint[0, 1]) == pytest.approx(0.5 * math.exp(-0.1), abs=1e-10)


class TestHittingMasterEvolution:
    def test_closed_form_value(self, sigma_z_set, plus_rho):
        _, series = hitting_master_evolution(plus_rho, sigma_z_set, 0.1, 10.0, 1.0)
        factor = series[-1].rho[0, 1].real * 2
        assert factor == pytest.approx(math.exp(-10 * (1 - math.exp(-0.1))), abs=1e-12)

    def test_zero_frequency_constant(self, sigma_z_set, plus_rho):
        _, series = hitting_master_evolution(plus_rho, sigma_z_set, 0.1, 0.0, 3.0)
        assert np.allclose(series[-1].rho, plus_rho.rho, atol=1e-14)

    def test_poisson_mixture_of_map_powers(self, sigma_z_set, plus_rho):
        # independent oracle: average the n-fold exact map over the Poisson
        # count distribution
        beta, mu, t = 0.2, 4.0, 1.5
        acc = np.zeros((2, 2), dtype=complex)
        rho_n = plus_rho
        for n in range(200):
            acc += poisson.pmf(n, mu * t) * rho_n.rho
            rho_n = exact_hitting_map(rho_n, sigma_z_set, beta)
        _, series = hitting_master_evolution(plus_rho, sigma_z_set, beta, mu, t)
        assert np.max(np.abs(acc - series[-1].rho)) < 1e-8

    def test_rate_approaches_continuous_limit(self, sigma_z_set):
        # mu * (1 - exp(-beta)) -> gamma * delta^2 / 2 = 2 gamma under beta*mu = 2 gamma
        gamma = 0.5
        rates = []
        for mu in (10.0, 1e2, 1e3, 1e4):
            beta = 2 * gamma / mu
            rates.append(mu * (1 - math.exp(-beta * 4.0 / 4.0)))
        target = gamma * 4.0 / 2.0
        gaps = [abs(r - target) for r in rates]
        assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))
        assert gaps[-1] < 1e-4

    def test_rk4_with_zero_hamiltonian_matches_closed_form(self, sigma_z_set, plus_rho):
        ham = Hamiltonian(np.zeros((2, 2)))
        _, with_h = hitting_master_evolution(
            plus_rho, sigma_z_set, 0.3, 5.0, 1.0, hamiltonian=ham
        )
        _, closed = hitting_master_evolution(plus_rho, sigma_z_set, 0.3, 5.0, 1.0)
        assert np.max(np.abs(with_h[-1].rho - closed[-1].rho)) < 1e-8


class TestLindbladEvolution:
    def test_closed_form_value(self, sigma_z_set, plus_rho):
        _, series = lindblad_evolution(plus_rho, sigma_z_set, 0.5, 1.0)
        assert series[-1].rho[0, 1].real * 2 == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_zero_strength_is_von_neumann(self, sigma_z_set):
        psi = StateVector([1.0, 0.0])
        rho0 = DensityMatrix.from_state(psi)
        ham = Hamiltonian(SX)
        _, series = lindblad_evolution(rho0, sigma_z_set, 0.0, 1.2, hamiltonian=ham)
        u = expm(-1j * SX * 1.2)
        oracle = u @ rho0.rho @ u.conj().T
        assert np.max(np.abs(series[-1].rho - oracle)) < 1e-8

    def test_diagonal_constant(self, sigma_z_set):
        rho = DensityMatrix(np.diag([0.25, 0.75]).astype(complex))
        _, series = lindblad_evolution(rho, sigma_z_set, 2.0, 5.0)
        assert np.allclose(series[-1].rho, rho.rho, atol=1e-14)

    def test_trace_and_positivity_over_horizon(self, sigma_z_set, plus_rho):
        ham = Hamiltonian(SX)
        times = np.linspace(0, 3.0, 13)
        _, series = lindblad_evolution(
            plus_rho, sigma_z_set, 0.7, 3.0, hamiltonian=ham, sample_times=times
        )
        for rho in series:
            assert abs(np.trace(rho.rho) - 1.0) < 1e-9
            assert rho.min_eigenvalue() > -1e-8

    def test_vector_gamma(self, correlated_pair_set, equal_qubit):
        rho0 = DensityMatrix.from_state(equal_qubit)
        _, series = lindblad_evolution(rho0, correlated_pair_set, (0.5, 0.25), 1.0)
        # rate = (0.5 * 1 + 0.25 * 4) / 2 = 0.75
        assert series[-1].rho[0, 1].real * 2 == pytest.approx(math.exp(-0.75), abs=1e-12)


class TestEnsembleDensityMatrix:
    def test_single_trajectory_projector(self, sigma_z_set, equal_qubit):
        cfg = HittingConfig(beta=0.5, mu=4.0, t_end=1.0, record_interval=0.5)
        rec = simulate_hitting_trajectory(
            equal_qubit, None, sigma_z_set, cfg, 3, store_states=True
        )
        rho = ensemble_density_matrix([rec], 1.0)
        assert rho.purity() == pytest.approx(1.0, abs=1e-10)

    def test_identical_trajectories_stay_pure(self, sigma_z_set, equal_qubit):
        cfg = HittingConfig(beta=0.5, mu=4.0, t_end=1.0, record_interval=0.5)
        recs = [
            simulate_hitting_trajectory(
                equal_qubit, None, sigma_z_set, cfg, 3, store_states=True
            )
            for _ in range(4)
        ]
        rho = ensemble_density_matrix(recs, 0.5)
        assert rho.purity() == pytest.approx(1.0, abs=1e-10)

    def test_missing_snapshots(self, sigma_z_set, equal_qubit):
        cfg = HittingConfig(beta=0.5, mu=4.0, t_end=1.0, record_interval=0.5)
        rec = simulate_hitting_trajectory(equal_qubit, None, sigma_z_set, cfg, 3)
        with pytest.raises(MissingSnapshotError):
            ensemble_density_matrix([rec], 0.5)

    def test_hitting_ensemble_near_master_oracle(self, sigma_z_set, equal_qubit):
        n = 2000
        cfg = HittingConfig(beta=0.4, mu=5.0, t_end=1.0, record_interval=0.5)
        records = run_hitting_ensemble(
            equal_qubit, None, sigma_z_set, cfg, n, 77, store_states=True
        )
        rho_mc = ensemble_density_matrix(records, 1.0)
        _, oracle = hitting_master_evolution(
            DensityMatrix.from_state(equal_qubit), sigma_z_set, 0.4, 5.0, 1.0
        )
        assert trace_norm_distance(rho_mc, oracle[-1]) < 5.0 / math.sqrt(n)


class TestCollapseStatistics:
    def test_eigenvector_hundred_percent(self, sigma_z_set):
        psi = StateVector([1.0, 0.0])
        cfg = HittingConfig(beta=1.0, mu=5.0, t_end=1.0, record_interval=0.5)
        recs = [
            simulate_hitting_trajectory(psi, None, sigma_z_set, cfg, s) for s in range(20)
        ]
        report = collapse_statistics(recs, sigma_z_set)
        assert report.unresolved_count == 0
        assert report.outcomes[0].frequency == 1.0
        assert report.outcomes[1].count == 0

    def test_weighted_qubit_frequencies(self, sigma_z_set):
        psi = StateVector([0.5, math.sqrt(0.75)])
        cfg = HittingConfig(beta=1.0, mu=10.0, t_end=6.0, record_interval=3.0)
        recs = run_hitting_ensemble(psi, None, sigma_z_set, cfg, 2000, 13)
        report = collapse_statistics(recs, sigma_z_set)
        se = math.sqrt(0.25 * 0.75 / report.n_resolved)
        assert abs(report.outcomes[0].frequency - 0.25) < 4 * se
        assert report.outcomes[0].ci_low < 0.25 < report.outcomes[0].ci_high

    def test_unresolved_fraction_matches_zero_count_probability(
        self, sigma_z_set, equal_qubit
    ):
        # mu * t_end = 1 with huge beta: any hit resolves, so the unresolved
        # fraction estimates the Poisson zero-count probability exp(-1)
        cfg = HittingConfig(beta=60.0, mu=1.0, t_end=1.0, record_interval=0.5)
        recs = run_hitting_ensemble(equal_qubit, None, sigma_z_set, cfg, 3000, 15)
        report = collapse_statistics(recs, sigma_z_set)
        target = math.exp(-1.0)
        se = math.sqrt(target * (1 - target) / len(recs))
        assert abs(report.unresolved_fraction - target) < 4 * se

    def test_degenerate_rows_aggregate(self):
        qs = validate_quantity_set([np.diag([1.0, 1.0, 2.0])])
        labels = group_eigenvalue_rows(qs)
        assert labels[0] == labels[1] != labels[2]
        # a superposition inside the degenerate subspace is already sharp
        psi = StateVector([SQ2, SQ2, 0.0])
        cfg = HittingConfig(beta=1.0, mu=10.0, t_end=2.0, record_interval=1.0)
        recs = [simulate_hitting_trajectory(psi, None, qs, cfg, s) for s in range(10)]
        report = collapse_statistics(recs, qs)
        assert report.unresolved_count == 0
        assert report.outcomes[0].frequency == 1.0
        assert report.outcomes[0].eigenvalues == (1.0,)

    def test_wilson_interval_basics(self):
        lo, hi = wilson_interval(50, 100, z=2.0)
        assert lo < 0.5 < hi
        assert wilson_interval(0, 0) == (0.0, 1.0)


class TestFactorization:
    def test_eigenstate_zero_discrepancy(self, sigma_z_set):
        psi = StateVector([1.0, 0.0])
        grid = np.linspace(-4, 4, 41)
        assert factorization_check(psi, sigma_z_set, 1.0, grid) < 1e-14

    def test_discrepancy_shrinks_with_beta(self, sigma_z_set, equal_qubit):
        wide = lambda beta: np.linspace(-1 - 5 / math.sqrt(beta), 1 + 5 / math.sqrt(beta), 81)
        d_coarse = factorization_check(equal_qubit, sigma_z_set, 1.0, wide(1.0))
        d_fine = factorization_check(equal_qubit, sigma_z_set, 0.01, wide(0.01))
        assert d_fine < d_coarse / 50.0

    def test_nonnegative(self, sigma_z_set, equal_qubit):
        grid = np.linspace(-3, 3, 21)
        assert factorization_check(equal_qubit, sigma_z_set, 0.5, grid) >= 0.0


class TestDbStatistics:
    def test_insufficient_events(self, sigma_z_set, equal_qubit):
        cfg = HittingConfig(beta=0.1, mu=5.0, t_end=2.0, record_interval=0.5,
                            schedule=Schedule.EVENLY_SPACED)
        recs = [simulate_hitting_trajectory(equal_qubit, None, sigma_z_set, cfg, 1)]
        with pytest.raises(InsufficientEventsError):
            db_statistics(recs, 0.1, 5.0, 0.5)

    def test_chain_moments_small(self, sigma_z_set, equal_qubit):
        recs = run_evenly_spaced_ensemble(
            equal_qubit, sigma_z_set, 1e-3, 3000.0, 2.0, 0.02, 50, 5
        )
        report = db_statistics(recs, 1e-3, 3000.0, 0.02)
        assert report.mean_hits_per_window == pytest.approx(60.0)
        assert abs(report.mean[0]) < 4 * report.mean_se[0]
        assert report.variance[0] == pytest.approx(0.02, rel=0.05)

    def test_factorized_windows_match_prelimit_laws(self, correlated_pair_set, equal_qubit):
        rng = np.random.default_rng(8)
        beta, mu, window = 0.05, 3000.0, 0.01
        report = sample_factorized_db_windows(
            equal_qubit, correlated_pair_set, beta, mu, window, 40000, rng
        )
        assert np.all(np.abs(report.mean) < 4 * report.mean_se)
        target_cov = 2 * beta * window * 0.5
        assert abs(report.covariance[0, 1] - target_cov) < 4 * report.covariance_se[0, 1]

    def test_factorized_requires_thirty_hits(self, sigma_z_set, equal_qubit):
        with pytest.raises(InsufficientEventsError):
            sample_factorized_db_windows(
                equal_qubit, sigma_z_set, 0.1, 10.0, 0.5, 100,
                np.random.default_rng(0),
            )


class TestConvergenceSweep:
    def test_channel_distances_decrease_with_slope_one(self, sigma_z_set, equal_qubit):
        rows = convergence_sweep(
            equal_qubit, sigma_z_set, 0.5, [10.0, 100.0, 1000.0], 500, 1.0, 3
        )
        channel = [r.channel_distance for r in rows]
        assert channel[0] > channel[1] > channel[2] > 0
        betas = [r.beta for r in rows]
        slope = np.polyfit(np.log(betas), np.log(channel), 1)[0]
        assert slope == pytest.approx(1.0, abs=0.15)

    def test_sorted_ascending_and_mc_error_bars(self, sigma_z_set, equal_qubit):
        rows = convergence_sweep(
            equal_qubit, sigma_z_set, 0.5, [100.0, 10.0], 2000, 1.0, 4
        )
        assert rows[0].mu == 10.0 and rows[1].mu == 100.0
        for row in rows:
            allowance = 3 * row.mc_error + 2 * row.noise_floor
            assert abs(row.mc_distance - row.channel_distance) <= allowance


class TestMartingaleHitting:
    def test_ensemble_mean_weights_constant(self, sigma_z_set, equal_qubit):
        cfg = HittingConfig(beta=0.5, mu=5.0, t_end=2.0, record_interval=0.25)
        records = run_hitting_ensemble(equal_qubit, None, sigma_z_set, cfg, 2000, 19)
        stats = ensemble_stats(records)
        drift = np.abs(stats.mean_weights[1:] - stats.mean_weights[0])
        z = drift / np.maximum(stats.mean_weight_se[1:], 1e-12)
        assert z.max() < 4.0

    def test_offdiagonal_decay_against_oracle(self, sigma_z_set, equal_qubit):
        n = 2000
        cfg = HittingConfig(beta=0.5, mu=4.0, t_end=1.5, record_interval=0.25)
        records = run_hitting_ensemble(
            equal_qubit, None, sigma_z_set, cfg, n, 21, store_states=True
        )
        rho0 = DensityMatrix.from_state(equal_qubit)
        times = records[0].sample_times
        _, oracle = hitting_master_evolution(
            rho0, sigma_z_set, 0.5, 4.0, float(times[-1]), sample_times=times
        )
        for t, rho_det in zip(times[1:], oracle[1:]):
            rho_mc = ensemble_density_matrix(records, float(t))
            assert trace_norm_distance(rho_mc, rho_det) < 5.0 / math.sqrt(n)
