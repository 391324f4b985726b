"""Lattice Fock spaces and smeared density quantity sets.

Identical particles are reduced by sharpening the particle density
around each point rather than any per-particle position, which respects
indistinguishability; several species sharpen the mass density with a
single stochastic field. On a one-dimensional lattice the smeared
density at site j counts particles through a Gaussian window of linear
size 1/sqrt(alpha), and all such operators are diagonal in the
occupation basis, so they form an exactly commuting quantity set that
the generic engines consume unchanged.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import DimensionMismatchError
from .hilbert import QuantitySet, StateVector, validate_quantity_set

DIMENSION_CAP = 5000

__all__ = [
    "Species",
    "FockLattice",
    "build_fock_lattice",
    "smearing_kernel",
    "build_number_density",
    "build_mass_density",
    "profile_probability",
    "profile_decoherence_rate",
    "LatticeScenario",
    "scenario_identical_particles",
]


@dataclass(frozen=True)
class Species:
    """One particle kind on the lattice, with a fixed total count."""

    name: str
    mass: float = 1.0
    statistics: str = "boson"
    count: int = 1
    max_occupation: int | None = None

    def __post_init__(self):
        if self.statistics not in ("boson", "fermion"):
            raise ValueError("statistics must be 'boson' or 'fermion'")
        if self.mass <= 0:
            raise ValueError("mass must be > 0")
        if self.count < 0:
            raise ValueError("count must be >= 0")
        cap = self.max_occupation
        if self.statistics == "fermion":
            if cap is not None and cap > 1:
                raise ValueError("fermionic occupations cannot exceed 1")
            cap = 1
        elif cap is None:
            cap = self.count
        object.__setattr__(self, "max_occupation", cap)


def _occupation_vectors(total: int, sites: int, cap: int):
    """All site-occupation tuples with the given total, lexicographic."""
    if sites == 1:
        if total <= cap:
            yield (total,)
        return
    for first in range(min(total, cap), -1, -1):
        for rest in _occupation_vectors(total - first, sites - 1, cap):
            yield (first,) + rest


class FockLattice:
    """Occupation-number basis for one or more species on a 1D lattice.

    Sites are cell-centred: x_j = origin + (j + 1/2) dx, so halving dx
    while doubling the site count tiles the same physical region. The
    basis enumerates, per species, every way to place its fixed particle
    count (fermions at most one per site), and takes the product across
    species; ``configs[i, k, j]`` is the occupation of site j by species
    k in basis state i.
    """

    __slots__ = ("positions", "dx", "species", "configs", "_index")

    def __init__(self, positions: np.ndarray, dx: float, species: tuple[Species, ...],
                 configs: np.ndarray):
        positions = np.asarray(positions, dtype=float)
        configs = np.asarray(configs, dtype=np.int64)
        positions.flags.writeable = False
        configs.flags.writeable = False
        self.positions = positions
        self.dx = float(dx)
        self.species = tuple(species)
        self.configs = configs
        self._index = {
            tuple(map(int, row.ravel())): i for i, row in enumerate(configs)
        }

    @property
    def num_sites(self) -> int:
        return self.positions.size

    @property
    def dim(self) -> int:
        return self.configs.shape[0]

    def index_of(self, occupations) -> int:
        """Basis index of an occupation configuration (species, site)."""
        arr = np.asarray(occupations, dtype=np.int64)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
        if arr.shape != (len(self.species), self.num_sites):
            raise DimensionMismatchError(
                f"occupations must have shape ({len(self.species)}, {self.num_sites})"
            )
        key = tuple(map(int, arr.ravel()))
        try:
            return self._index[key]
        except KeyError:
            raise KeyError(f"no basis state with occupations {occupations}") from None

    def state_from_amplitudes(self, entries) -> StateVector:
        """Build a state from (occupations, complex amplitude) pairs."""
        amps = np.zeros(self.dim, dtype=np.complex128)
        for occupations, amplitude in entries:
            amps[self.index_of(occupations)] += amplitude
        return StateVector(amps, normalize=True)

    def site_numbers(self, species_index: int) -> np.ndarray:
        """(dim, sites) on-site occupation eigenvalues for one species."""
        return self.configs[:, species_index, :].astype(float)

    def __repr__(self) -> str:
        return (
            f"FockLattice(sites={self.num_sites}, species={len(self.species)}, "
            f"dim={self.dim})"
        )


def build_fock_lattice(
    n_sites: int,
    dx: float,
    species,
    *,
    origin: float = 0.0,
    dimension_cap: int = DIMENSION_CAP,
) -> FockLattice:
    """Enumerate the occupation basis; errors out above the dimension cap."""
    if n_sites < 2:
        raise DimensionMismatchError("lattice needs at least 2 sites")
    if dx <= 0:
        raise ValueError("dx must be > 0")
    species = tuple(species)
    if not species:
        raise ValueError("need at least one species")
    per_species = []
    for sp in species:
        vectors = list(_occupation_vectors(sp.count, n_sites, sp.max_occupation))
        if not vectors:
            raise ValueError(
                f"species {sp.name!r} cannot place {sp.count} particles on "
                f"{n_sites} sites with max occupation {sp.max_occupation}"
            )
        per_species.append(vectors)
    dim = math.prod(len(v) for v in per_species)
    if dim > dimension_cap:
        raise ValueError(
            f"Fock dimension {dim} exceeds the cap {dimension_cap}; "
            "shrink the lattice or the particle counts"
        )
    configs = np.array(
        [np.stack(combo) for combo in itertools.product(*per_species)], dtype=np.int64
    )
    positions = origin + (np.arange(n_sites) + 0.5) * dx
    return FockLattice(positions, dx, species, configs)


def smearing_kernel(positions: np.ndarray, dx: float, alpha: float) -> np.ndarray:
    """Weights of the Gaussian counting window, integrated over site cells.

    ``kernel[j, jp]`` is the probability mass the window centred at site j
    (variance 1/alpha) assigns to the cell of site jp. Exact cell
    integration keeps every row summing to at most 1: for
    alpha * dx^2 << 1 it reduces to the midpoint form
    (alpha/2pi)^(1/2) exp(-alpha (x_j - x_jp)^2 / 2) dx, and for
    alpha -> infinity it concentrates to the identity, making the smeared
    density the on-site number operator.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    x = np.asarray(positions, dtype=float)
    scaled = math.sqrt(alpha / 2.0)
    upper = erf(scaled * (x[np.newaxis, :] - x[:, np.newaxis] + dx / 2.0))
    lower = erf(scaled * (x[np.newaxis, :] - x[:, np.newaxis] - dx / 2.0))
    return 0.5 * (upper - lower)


def build_number_density(
    lattice: FockLattice, species_index: int, alpha: float
) -> list[np.ndarray]:
    """Smeared number-density operators, one Hermitian matrix per site.

    Diagonal in the occupation basis (hence exactly commuting):
    N(x_j) = sum_jp kernel[j, jp] * n_{jp} with n the on-site number
    operator of the chosen species.
    """
    kernel = smearing_kernel(lattice.positions, lattice.dx, alpha)
    numbers = lattice.site_numbers(species_index)  # (dim, sites)
    smeared = numbers @ kernel.T                   # (dim, sites)
    return [np.diag(smeared[:, j]).astype(np.complex128) for j in range(lattice.num_sites)]


def build_mass_density(lattice: FockLattice, alpha: float) -> list[np.ndarray]:
    """Mass-density operators M(x_j) = sum_k m_k N_k(x_j)."""
    kernel = smearing_kernel(lattice.positions, lattice.dx, alpha)
    total = np.zeros((lattice.dim, lattice.num_sites))
    for k, sp in enumerate(lattice.species):
        total += sp.mass * (lattice.site_numbers(k) @ kernel.T)
    return [np.diag(total[:, j]).astype(np.complex128) for j in range(lattice.num_sites)]


def profile_probability(
    psi: StateVector,
    quantities: QuantitySet,
    profile,
    beta: float,
    dx: float,
) -> float:
    """Probability density of a density-profile hitting centre.

    Profiles are in cell counts, matching the smeared operators. The
    spatial integral in the exponent discretizes to a cell sum and each
    count carries one factor of dx relative to a density, so the per-site
    accuracy is beta / dx, and the normalization constant reduces to
    (beta / (pi dx))^(M/2) because the Born weights sum to 1.
    """
    values = np.asarray(profile, dtype=float).reshape(-1)
    num_sites = quantities.num_quantities
    if values.size != num_sites:
        raise DimensionMismatchError(
            f"profile has {values.size} sites, expected {num_sites}"
        )
    beta_eff = beta / dx
    weights = quantities.born_weights(psi)
    offsets = quantities.eigenvalue_table - values[np.newaxis, :]
    dist2 = np.sum(offsets**2, axis=1)
    pref = (beta_eff / math.pi) ** (num_sites / 2.0)
    return float(pref * np.sum(weights * np.exp(-beta_eff * dist2)))


def profile_decoherence_rate(
    quantities: QuantitySet, index_a: int, index_b: int, gamma_eff: float
) -> float:
    """Closed-form decay rate of the coherence between two basis states.

    Rate = gamma_eff / 2 * sum_j (density difference at site j)^2; for
    density operators on a lattice this is a Riemann sum of the continuum
    expression, so it is invariant under grid refinement at fixed
    physical strength.
    """
    table = quantities.eigenvalue_table
    diff = table[index_a] - table[index_b]
    return 0.5 * gamma_eff * float(np.sum(diff**2))


@dataclass(frozen=True)
class LatticeScenario:
    """A lattice model wired for the generic engines.

    The spatially white noise field discretizes to independent per-site
    increments of variance dt/dx. The smeared operators are cell counts
    (one factor of dx relative to densities), so after rewriting with
    unit-variance increments the per-site strength and accuracy are
    gamma/dx and beta/dx; the induced decoherence rates are then Riemann
    sums, invariant under grid refinement.
    """

    lattice: FockLattice
    quantities: QuantitySet
    psi0: StateVector
    alpha: float
    kind: str                      # "number-density" or "mass-density"
    beta_eff: float | None = None
    mu: float | None = None
    gamma_eff: float | None = None


def scenario_identical_particles(
    lattice: FockLattice,
    alpha: float,
    *,
    beta: float | None = None,
    mu: float | None = None,
    gamma: float | None = None,
    use_mass_density: bool = False,
    initial_state,
) -> LatticeScenario:
    """Package smeared densities and effective strengths for the engines.

    Provide ``beta`` and ``mu`` for the hitting process, ``gamma`` for
    the continuous one, or both; a missing ``gamma`` is derived as
    beta * mu / 2. Multiple species require the mass-density variant.
    """
    if use_mass_density:
        operators = build_mass_density(lattice, alpha)
        kind = "mass-density"
    else:
        if len(lattice.species) != 1:
            raise ValueError(
                "number-density sharpening applies to a single species; "
                "use the mass density for several kinds"
            )
        operators = build_number_density(lattice, 0, alpha)
        kind = "number-density"
    quantities = validate_quantity_set(operators)
    psi0 = (
        initial_state
        if isinstance(initial_state, StateVector)
        else lattice.state_from_amplitudes(initial_state)
    )
    if psi0.dim != lattice.dim:
        raise DimensionMismatchError("initial state dimension does not match the lattice")
    if gamma is None and beta is not None and mu is not None:
        gamma = beta * mu / 2.0
    return LatticeScenario(
        lattice=lattice,
        quantities=quantities,
        psi0=psi0,
        alpha=alpha,
        kind=kind,
        beta_eff=None if beta is None else beta / lattice.dx,
        mu=mu,
        gamma_eff=None if gamma is None else gamma / lattice.dx,
    )
