import numpy as np
import pytest

from qreduce.hilbert import StateVector, validate_quantity_set

SQ2 = 1.0 / np.sqrt(2.0)


@pytest.fixture(scope="session")
def sigma_z_set():
    return validate_quantity_set([np.diag([1.0, -1.0]).astype(complex)])


@pytest.fixture(scope="session")
def equal_qubit():
    return StateVector([SQ2, SQ2])


@pytest.fixture(scope="session")
def correlated_pair_set():
    """K=2 commuting diagonal pair with quantum covariance 1/2 on |+>."""
    return validate_quantity_set(
        [np.diag([1.0, 2.0]).astype(complex), np.diag([3.0, 5.0]).astype(complex)]
    )


@pytest.fixture(scope="session")
def three_level_set():
    return validate_quantity_set([np.diag([1.0, 2.0, 3.0]).astype(complex)])


def random_state(rng: np.random.Generator, dim: int) -> StateVector:
    amps = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return StateVector(amps, normalize=True)


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(m)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))[np.newaxis, :]
