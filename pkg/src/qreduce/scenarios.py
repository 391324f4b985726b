"""Build engine-ready objects from a validated configuration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig, hamiltonian_matrix_from_spec, matrix_from_json
from .continuous import ContinuousConfig, suggested_dt
from .errors import ConfigError
from .fock import Species, build_fock_lattice, scenario_identical_particles
from .hilbert import Hamiltonian, QuantitySet, StateVector, validate_quantity_set
from .hitting import HitStream, HittingConfig, Schedule


@dataclass
class BuiltScenario:
    """Everything the runners need for one scenario."""

    config: ScenarioConfig
    psi0: StateVector
    quantities: QuantitySet
    hamiltonian: Hamiltonian | None
    beta: float | None          # per-hit accuracy handed to the engine
    mu: float | None
    gamma: float | np.ndarray | None  # strength handed to the engine
    streams: list[HitStream] | None = None  # multistream models only

    def hitting_config(self) -> HittingConfig:
        if self.beta is None or self.mu is None:
            raise ConfigError("beta", "scenario has no hitting parameters")
        return HittingConfig(
            beta=self.beta,
            mu=self.mu,
            t_end=self.config.t_end,
            record_interval=self.config.record_interval,
            schedule=Schedule(self.config.schedule),
        )

    def continuous_config(self) -> ContinuousConfig:
        if self.gamma is None:
            raise ConfigError("gamma", "scenario has no continuous strength")
        dt = self.config.dt
        if dt is None:
            dt = suggested_dt(self.quantities, self.gamma)
            # snap so the record interval is an integer number of steps
            steps = max(1, int(np.ceil(self.config.record_interval / dt)))
            dt = self.config.record_interval / steps
        g = self.gamma
        return ContinuousConfig(
            gamma=tuple(np.atleast_1d(g).tolist()) if np.ndim(g) else float(g),
            dt=dt,
            t_end=self.config.t_end,
            record_interval=self.config.record_interval,
        )


def _state_from_amplitude_spec(spec, dim: int) -> StateVector:
    if not isinstance(spec, dict) or "re" not in spec:
        raise ConfigError("initial_state", "initial_state must carry re (and im) arrays")
    re = np.asarray(spec["re"], dtype=float)
    im = np.asarray(spec.get("im", np.zeros_like(re)), dtype=float)
    if re.size != dim or im.size != dim:
        raise ConfigError("initial_state", f"initial_state must have {dim} amplitudes")
    return StateVector(re + 1j * im, normalize=True)


def _build_explicit(config: ScenarioConfig) -> BuiltScenario:
    ops_spec = config.payload.get("operators")
    if not ops_spec:
        raise ConfigError("operators", "operators are required for explicit-matrices")
    operators = [matrix_from_json(m, f"operators[{i}]") for i, m in enumerate(ops_spec)]
    quantities = validate_quantity_set(operators)
    psi0 = _state_from_amplitude_spec(config.payload.get("initial_state"), quantities.dim)
    h_matrix = hamiltonian_matrix_from_spec(config.hamiltonian)
    hamiltonian = None if h_matrix is None else Hamiltonian(h_matrix)
    if hamiltonian is not None and hamiltonian.dim != quantities.dim:
        raise ConfigError("hamiltonian", "hamiltonian dimension does not match operators")
    return BuiltScenario(
        config=config,
        psi0=psi0,
        quantities=quantities,
        hamiltonian=hamiltonian,
        beta=config.beta,
        mu=config.mu,
        gamma=config.gamma,
    )


def _lattice_from_payload(config: ScenarioConfig) -> tuple:
    payload = config.payload
    try:
        sites = int(payload["sites"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError("sites", "sites must be an integer") from None
    try:
        dx = float(payload["dx"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError("dx", "dx must be a number") from None
    if dx <= 0:
        raise ConfigError("dx", "dx must be > 0")
    try:
        alpha = float(payload["alpha"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError("alpha", "alpha must be a number") from None
    if alpha <= 0:
        raise ConfigError("alpha", "alpha must be > 0")
    return sites, dx, alpha


def _build_lattice_scenario(config: ScenarioConfig, use_mass: bool) -> BuiltScenario:
    sites, dx, alpha = _lattice_from_payload(config)
    species_spec = config.payload.get("species")
    if not species_spec:
        raise ConfigError("species", "species list is required for lattice scenarios")
    species = []
    for i, sp in enumerate(species_spec):
        try:
            species.append(
                Species(
                    name=str(sp.get("name", f"species{i}")),
                    mass=float(sp.get("mass", 1.0)),
                    statistics=str(sp.get("statistics", "boson")),
                    count=int(sp["count"]),
                    max_occupation=sp.get("max_occupation"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("species", f"species[{i}] is malformed: {exc}") from None
    try:
        lattice = build_fock_lattice(sites, dx, species)
    except ValueError as exc:
        raise ConfigError("species", str(exc)) from None

    entries_spec = config.payload.get("initial_state")
    if not entries_spec:
        raise ConfigError("initial_state", "initial_state entries are required")
    entries = []
    for i, entry in enumerate(entries_spec):
        try:
            occ = np.asarray(entry["occupations"], dtype=int)
            amp = complex(float(entry["re"]), float(entry.get("im", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(
                "initial_state", f"initial_state[{i}] is malformed: {exc}"
            ) from None
        entries.append((occ, amp))
    try:
        scenario = scenario_identical_particles(
            lattice,
            alpha,
            beta=config.beta,
            mu=config.mu,
            gamma=config.gamma,
            use_mass_density=use_mass,
            initial_state=entries,
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError("initial_state", str(exc)) from None
    if config.hamiltonian is not None:
        raise ConfigError(
            "hamiltonian", "lattice scenarios run the pure reduction process"
        )
    return BuiltScenario(
        config=config,
        psi0=scenario.psi0,
        quantities=scenario.quantities,
        hamiltonian=None,
        beta=scenario.beta_eff,
        mu=config.mu,
        gamma=scenario.gamma_eff,
    )


def _build_distinguishable(config: ScenarioConfig) -> BuiltScenario:
    sites, dx, alpha = _lattice_from_payload(config)
    particles = config.payload.get("particles")
    if not particles:
        raise ConfigError("particles", "particles list is required")
    rates = []
    for i, p in enumerate(particles):
        try:
            rate = float(p["rate"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError("particles", f"particles[{i}].rate must be a number") from None
        if rate <= 0:
            raise ConfigError("particles", f"particles[{i}].rate must be > 0")
        rates.append(rate)
    n_particles = len(rates)
    dim = sites**n_particles
    if dim > 5000:
        raise ConfigError("particles", f"Hilbert dimension {dim} exceeds the cap 5000")

    positions = (np.arange(sites) + 0.5) * dx
    eye = np.eye(sites)
    diag = np.diag(positions).astype(complex)
    operators = []
    for l in range(n_particles):
        factors = [diag if k == l else eye for k in range(n_particles)]
        op = factors[0]
        for f in factors[1:]:
            op = np.kron(op, f)
        operators.append(op)
    quantities = validate_quantity_set(operators)

    entries = config.payload.get("initial_state")
    if not entries:
        raise ConfigError("initial_state", "initial_state entries are required")
    amps = np.zeros(dim, dtype=complex)
    for i, entry in enumerate(entries):
        try:
            where = [int(s) for s in entry["sites"]]
            amp = complex(float(entry["re"]), float(entry.get("im", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(
                "initial_state", f"initial_state[{i}] is malformed: {exc}"
            ) from None
        if len(where) != n_particles or any(not 0 <= s < sites for s in where):
            raise ConfigError(
                "initial_state", f"initial_state[{i}].sites must hold {n_particles} "
                f"site indices below {sites}"
            )
        index = 0
        for s in where:
            index = index * sites + s
        amps[index] += amp
    psi0 = StateVector(amps, normalize=True)

    # one stream per particle: localization frequency rate_l, accuracy alpha
    streams = [
        HitStream(
            quantity_indices=(l,),
            beta=alpha,
            mu=rates[l],
            schedule=Schedule(config.schedule),
        )
        for l in range(n_particles)
    ]
    gamma = np.array([alpha * rate / 2.0 for rate in rates])
    h_matrix = hamiltonian_matrix_from_spec(config.hamiltonian)
    hamiltonian = None if h_matrix is None else Hamiltonian(h_matrix)
    if hamiltonian is not None and hamiltonian.dim != dim:
        raise ConfigError("hamiltonian", "hamiltonian dimension does not match the lattice")
    return BuiltScenario(
        config=config,
        psi0=psi0,
        quantities=quantities,
        hamiltonian=hamiltonian,
        beta=alpha,
        mu=None,
        gamma=gamma,
        streams=streams,
    )


def build_scenario(config: ScenarioConfig) -> BuiltScenario:
    if config.scenario == "explicit-matrices":
        return _build_explicit(config)
    if config.scenario == "identical-particles":
        return _build_lattice_scenario(config, use_mass=False)
    if config.scenario == "mass-density":
        return _build_lattice_scenario(config, use_mass=True)
    if config.scenario == "distinguishable-particles":
        return _build_distinguishable(config)
    raise ConfigError("scenario", f"unhandled scenario kind {config.scenario!r}")
