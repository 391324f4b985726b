"""Finite-dimensional Hilbert-space primitives.

States, commuting Hermitian quantity sets with a cached joint
eigendecomposition, Hamiltonians, and the expectation machinery the
reduction engines are built on.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DimensionMismatchError,
    NonCommutingError,
    NonHermitianError,
    NonRealExpectationError,
)

# Double-precision defaults, sized for dense spaces up to d ~ 500.
NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-10
COMMUTATOR_TOL = 1e-10
DIAGONAL_TOL = 1e-9

# Fixed seed for the random linear combination used by the joint
# diagonalizer; makes the eigenbasis deterministic across runs.
_COMBINATION_SEED = 0x5EED

__all__ = [
    "StateVector",
    "Hamiltonian",
    "QuantitySet",
    "validate_quantity_set",
    "expectation",
    "quantum_covariance",
    "born_weights",
]


def _as_square_complex(matrix, name: str = "matrix") -> np.ndarray:
    m = np.asarray(matrix, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {m.shape}")
    return m


def _hermiticity_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


class StateVector:
    """Normalized complex amplitude vector in a d-dimensional space.

    Immutable. The squared norm is 1 within ``NORM_TOL`` after every
    public operation; dimension 1 is degenerate for reduction dynamics
    and rejected.
    """

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes, *, normalize: bool = False, tol: float = NORM_TOL):
        amps = np.array(amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size < 2:
            raise DimensionMismatchError(
                f"state dimension must be >= 2, got {amps.size}"
            )
        nrm2 = float(np.sum(np.abs(amps) ** 2))
        if normalize:
            if nrm2 <= 0.0:
                raise ValueError("cannot normalize a zero state vector")
            amps = amps / np.sqrt(nrm2)
        elif abs(nrm2 - 1.0) > 100 * tol:
            # squared-norm check; the loose factor keeps legitimate
            # round-tripped states from tripping the gate
            raise ValueError(f"state not normalized: |psi|^2 = {nrm2!r}")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    def __setattr__(self, name, value):
        raise AttributeError("StateVector is immutable")

    def __reduce__(self):
        return (StateVector, (np.array(self.amplitudes),))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "StateVector") -> float:
        """Squared overlap |<self|other>|^2, phase-free."""
        return abs(self.overlap(other)) ** 2

    def __repr__(self) -> str:
        return f"StateVector(dim={self.dim})"


class Hamiltonian:
    """Hermitian generator of the unitary part of the dynamics.

    ``hbar`` defaults to 1 (natural units). The eigendecomposition is
    cached on first use so exact propagators for arbitrary time steps
    cost two matrix-vector products each.
    """

    __slots__ = ("matrix", "hbar", "_eig")

    def __init__(self, matrix, *, hbar: float = 1.0, tol: float = HERMITIAN_TOL):
        m = _as_square_complex(matrix, "hamiltonian")
        defect = _hermiticity_defect(m)
        if defect > tol:
            raise NonHermitianError(
                f"hamiltonian deviates from Hermiticity by {defect:.3e} (tol {tol:.1e})"
            )
        if hbar <= 0:
            raise ValueError("hbar must be > 0")
        m = (m + m.conj().T) / 2.0
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "hbar", float(hbar))
        object.__setattr__(self, "_eig", None)

    def __setattr__(self, name, value):
        raise AttributeError("Hamiltonian is immutable")

    def __reduce__(self):
        return (_rebuild_hamiltonian, (np.array(self.matrix), self.hbar))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigensystem(self):
        if self._eig is None:
            w, u = np.linalg.eigh(self.matrix)
            object.__setattr__(self, "_eig", (w, u))
        return self._eig

    def propagator(self, dt: float) -> np.ndarray:
        """exp(-i H dt / hbar), exact via the eigendecomposition."""
        w, u = self.eigensystem()
        phases = np.exp(-1j * w * dt / self.hbar)
        return (u * phases) @ u.conj().T


def _rebuild_hamiltonian(matrix, hbar):
    return Hamiltonian(matrix, hbar=hbar)


def _cluster_sorted(values: np.ndarray, tol: float) -> list[np.ndarray]:
    """Group indices of ``values`` (ascending) into near-degenerate runs."""
    order = np.argsort(values, kind="stable")
    groups: list[list[int]] = [[int(order[0])]]
    for idx in order[1:]:
        if values[idx] - values[groups[-1][-1]] <= tol:
            groups[-1].append(int(idx))
        else:
            groups.append([int(idx)])
    return [np.array(g) for g in groups]


def _refine_block(basis: np.ndarray, indices: np.ndarray, operators, tol: float):
    """Rotate ``basis`` columns ``indices`` to diagonalize each operator in turn.

    Within a degenerate block every operator acts invariantly, so a
    per-operator eigendecomposition of the projected block, applied
    recursively to its own degenerate sub-blocks, diagonalizes the family.
    """
    if len(indices) <= 1 or not operators:
        return
    op = operators[0]
    sub = basis[:, indices]
    block = sub.conj().T @ op @ sub
    block = (block + block.conj().T) / 2.0
    vals, rot = np.linalg.eigh(block)
    basis[:, indices] = sub @ rot
    for group in _cluster_sorted(vals, tol):
        _refine_block(basis, indices[group], operators[1:], tol)


def _canonical_column_order(basis: np.ndarray, table: np.ndarray):
    """Deterministic column convention for the joint eigenbasis.

    Columns are ordered by the index of their dominant amplitude (ties
    broken by eigenvalue rows), and each column is re-phased so its
    largest entry is real positive. Already-diagonal inputs therefore
    get the identity basis with rows in computational order.
    """
    dominant = np.argmax(np.abs(basis), axis=0)
    keys = list(zip(dominant.tolist(), *(np.round(table, 9).T.tolist())))
    order = sorted(range(basis.shape[1]), key=lambda k: keys[k])
    basis = basis[:, order]
    table = table[order, :]
    pivots = basis[np.argmax(np.abs(basis), axis=0), np.arange(basis.shape[1])]
    phases = pivots / np.abs(pivots)
    return basis / phases[np.newaxis, :], table


class QuantitySet:
    """K pairwise-commuting Hermitian quantities with their joint basis.

    Construct through :func:`validate_quantity_set`, which verifies
    Hermiticity and commutativity and computes the simultaneous
    eigendecomposition. ``eigenvalue_table[k, p]`` is the eigenvalue of
    quantity ``p`` on joint eigenvector ``k`` (column ``k`` of
    ``joint_basis``). Immutable and safe to share across workers.
    """

    __slots__ = ("operators", "joint_basis", "eigenvalue_table")

    def __init__(self, operators: np.ndarray, joint_basis: np.ndarray,
                 eigenvalue_table: np.ndarray):
        for arr in (operators, joint_basis, eigenvalue_table):
            arr.flags.writeable = False
        object.__setattr__(self, "operators", operators)
        object.__setattr__(self, "joint_basis", joint_basis)
        object.__setattr__(self, "eigenvalue_table", eigenvalue_table)

    def __setattr__(self, name, value):
        raise AttributeError("QuantitySet is immutable")

    def __reduce__(self):
        return (
            QuantitySet,
            (
                np.array(self.operators),
                np.array(self.joint_basis),
                np.array(self.eigenvalue_table),
            ),
        )

    @property
    def dim(self) -> int:
        return self.joint_basis.shape[0]

    @property
    def num_quantities(self) -> int:
        return self.eigenvalue_table.shape[1]

    def to_joint(self, psi: StateVector | np.ndarray) -> np.ndarray:
        """Amplitudes of ``psi`` in the joint eigenbasis."""
        amps = psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi)
        return self.joint_basis.conj().T @ amps

    def from_joint(self, coeffs: np.ndarray) -> np.ndarray:
        return self.joint_basis @ coeffs

    def born_weights(self, psi: StateVector) -> np.ndarray:
        """Squared overlaps with each joint eigenvector, in basis order."""
        return born_weights(psi, self)

    def expectation(self, psi: StateVector, p: int) -> float:
        return expectation(psi, self, p)

    def covariance(self, psi: StateVector, p: int, q: int) -> float:
        return quantum_covariance(psi, self, p, q)

    def expectations(self, psi: StateVector) -> np.ndarray:
        """All K expectation values at once, via the eigenvalue table."""
        return self.born_weights(psi) @ self.eigenvalue_table

    def spectral_spread(self) -> float:
        """Largest squared eigenvalue-row separation, summed over quantities.

        Sets the fastest decoherence rate of the induced dynamics.
        """
        table = self.eigenvalue_table
        diffs = table[:, np.newaxis, :] - table[np.newaxis, :, :]
        return float(np.max(np.sum(diffs**2, axis=-1)))

    def __repr__(self) -> str:
        return f"QuantitySet(dim={self.dim}, K={self.num_quantities})"


def validate_quantity_set(
    operators,
    *,
    hermitian_tol: float = HERMITIAN_TOL,
    commutator_tol: float = COMMUTATOR_TOL,
    diagonal_tol: float = DIAGONAL_TOL,
    combination_seed: int = _COMBINATION_SEED,
) -> QuantitySet:
    """Check a family of matrices and build its joint eigenstructure.

    The matrices must be square, share one dimension, be Hermitian within
    ``hermitian_tol`` (max-entry norm) and pairwise commute within
    ``commutator_tol``. Simultaneous diagonalization proceeds by
    diagonalizing a random real-coefficient linear combination (fixed
    seed, hence deterministic) and refining degenerate blocks operator by
    operator.

    Raises
    ------
    NonHermitianError, NonCommutingError, DimensionMismatchError
    """
    mats = [_as_square_complex(m, f"operator {i}") for i, m in enumerate(operators)]
    if not mats:
        raise DimensionMismatchError("quantity set must contain at least one operator")
    dim = mats[0].shape[0]
    if dim < 2:
        raise DimensionMismatchError(f"quantity sets need dimension >= 2, got {dim}")
    for i, m in enumerate(mats):
        if m.shape[0] != dim:
            raise DimensionMismatchError(
                f"operator {i} has dimension {m.shape[0]}, expected {dim}"
            )
        defect = _hermiticity_defect(m)
        if defect > hermitian_tol:
            raise NonHermitianError(
                f"operator {i} deviates from Hermiticity by {defect:.3e} "
                f"(tol {hermitian_tol:.1e})"
            )
    scale = max(max(float(np.max(np.abs(m))) for m in mats), 1.0)
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            comm = mats[i] @ mats[j] - mats[j] @ mats[i]
            defect = float(np.max(np.abs(comm)))
            if defect > commutator_tol * scale:
                raise NonCommutingError(
                    f"operators {i} and {j} do not commute: "
                    f"max |[A_{i}, A_{j}]| = {defect:.3e}"
                )

    stack = np.stack([(m + m.conj().T) / 2.0 for m in mats])
    rng = np.random.default_rng(combination_seed)
    coeffs = rng.standard_normal(len(mats))
    combo = np.tensordot(coeffs, stack, axes=1)
    vals, basis = np.linalg.eigh(combo)
    combo_scale = max(float(np.max(np.abs(vals))), 1.0)
    for group in _cluster_sorted(vals, 1e-8 * combo_scale):
        _refine_block(basis, group, list(stack), 1e-8 * scale)

    table = np.empty((dim, len(mats)))
    for p, m in enumerate(stack):
        transformed = basis.conj().T @ m @ basis
        off = transformed - np.diag(np.diagonal(transformed))
        worst = float(np.max(np.abs(off)))
        if worst > diagonal_tol * scale:
            raise NonCommutingError(
                f"joint diagonalization failed for operator {p}: "
                f"max off-diagonal {worst:.3e}"
            )
        table[:, p] = np.diagonal(transformed).real

    basis, table = _canonical_column_order(basis, table)
    return QuantitySet(stack, basis, table)


def expectation(psi: StateVector, quantities: QuantitySet, p: int) -> float:
    """<psi| A_p |psi> as a real number.

    Evaluated through the raw matrix so that a corrupted operator is
    caught: an imaginary residue above 1e-8 raises
    :class:`NonRealExpectationError`; smaller residues are discarded.
    """
    if not 0 <= p < quantities.num_quantities:
        raise DimensionMismatchError(
            f"quantity index {p} out of range 0..{quantities.num_quantities - 1}"
        )
    amps = psi.amplitudes
    value = complex(np.vdot(amps, quantities.operators[p] @ amps))
    if abs(value.imag) > 1e-8:
        raise NonRealExpectationError(
            f"expectation of quantity {p} has imaginary residue {value.imag:.3e}"
        )
    return value.real


def quantum_covariance(psi: StateVector, quantities: QuantitySet, p: int, q: int) -> float:
    """<A_p A_q> - <A_p><A_q>; symmetric because the quantities commute."""
    for idx in (p, q):
        if not 0 <= idx < quantities.num_quantities:
            raise DimensionMismatchError(
                f"quantity index {idx} out of range 0..{quantities.num_quantities - 1}"
            )
    amps = psi.amplitudes
    prod = quantities.operators[p] @ quantities.operators[q]
    value = complex(np.vdot(amps, prod @ amps))
    if abs(value.imag) > 1e-8:
        raise NonRealExpectationError(
            f"covariance of quantities ({p}, {q}) has imaginary residue {value.imag:.3e}"
        )
    return value.real - expectation(psi, quantities, p) * expectation(psi, quantities, q)


def born_weights(psi: StateVector, quantities: QuantitySet) -> np.ndarray:
    """Weights |<alpha_k|psi>|^2 in joint-basis order; they sum to 1.

    These are the long-time collapse probabilities of both reduction
    processes. Degenerate eigenvalue rows each get their own weight;
    collapse statistics aggregate rows downstream when needed.
    """
    coeffs = quantities.to_joint(psi)
    weights = np.abs(coeffs) ** 2
    total = weights.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"born weights sum to {total!r}; state not normalized")
    return weights / total
