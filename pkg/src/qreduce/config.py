"""Scenario configuration: JSON parsing, validation, presets."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError

SCENARIO_KINDS = (
    "explicit-matrices",
    "distinguishable-particles",
    "identical-particles",
    "mass-density",
)
ENGINES = ("hitting", "continuous", "both")
SCHEDULES = ("poisson", "evenly-spaced")

PRESET_NAMES = (
    "qubit-equal",
    "three-level-weighted",
    "boson-2site",
    "two-species-mass",
)


def matrix_from_json(obj, key: str = "matrix") -> np.ndarray:
    """Parse the textual matrix format: dim plus row-major re/im arrays."""
    if not isinstance(obj, dict):
        raise ConfigError(key, f"{key} must be an object with dim/re/im")
    try:
        dim = int(obj["dim"])
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros(dim * dim)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(key, f"{key} is malformed: {exc}") from None
    if re.size != dim * dim or im.size != dim * dim:
        raise ConfigError(key, f"{key} re/im must hold dim*dim = {dim * dim} entries")
    return (re + 1j * im).reshape(dim, dim)


def matrix_to_json(matrix: np.ndarray) -> dict:
    m = np.asarray(matrix, dtype=complex)
    return {
        "dim": m.shape[0],
        "re": m.real.ravel().tolist(),
        "im": m.imag.ravel().tolist(),
    }


_PAULIS = {
    "sigma_x": np.array([[0, 1], [1, 0]], dtype=complex),
    "sigma_y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "sigma_z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def hamiltonian_matrix_from_spec(spec, key: str = "hamiltonian") -> np.ndarray | None:
    """None, an explicit matrix object, or a named preset with a scale."""
    if spec is None:
        return None
    if isinstance(spec, dict) and "name" in spec:
        name = spec["name"]
        if name not in _PAULIS:
            raise ConfigError(
                key, f"{key} name must be one of {sorted(_PAULIS)}, got {name!r}"
            )
        return float(spec.get("scale", 1.0)) * _PAULIS[name]
    return matrix_from_json(spec, key)


def _positive(raw: dict, key: str, *, required: bool) -> float | None:
    if key not in raw or raw[key] is None:
        if required:
            raise ConfigError(key, f"{key} is required for this scenario")
        return None
    try:
        value = float(raw[key])
    except (TypeError, ValueError):
        raise ConfigError(key, f"{key} must be a number") from None
    if not value > 0:
        raise ConfigError(key, f"{key} must be > 0")
    return value


@dataclass
class ScenarioConfig:
    """Validated run configuration.

    With engine ``both`` and beta, mu given, gamma is forced to
    beta * mu / 2 unless explicitly overridden (which warns): the two
    engines are then parent and limit of each other.
    """

    scenario: str
    engine: str
    t_end: float
    record_interval: float
    n_trajectories: int
    seed: int
    beta: float | None = None
    mu: float | None = None
    gamma: float | None = None
    dt: float | None = None
    schedule: str = "poisson"
    hamiltonian: object = None
    store_states: bool = False
    output_dir: str | None = None
    payload: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config", "configuration must be a JSON object")
        scenario = raw.get("scenario")
        if scenario not in SCENARIO_KINDS:
            raise ConfigError(
                "scenario", f"scenario must be one of {SCENARIO_KINDS}, got {scenario!r}"
            )
        engine = raw.get("engine")
        if engine not in ENGINES:
            raise ConfigError("engine", f"engine must be one of {ENGINES}, got {engine!r}")
        schedule = raw.get("schedule", "poisson")
        if schedule not in SCHEDULES:
            raise ConfigError(
                "schedule", f"schedule must be one of {SCHEDULES}, got {schedule!r}"
            )

        t_end = _positive(raw, "t_end", required=True)
        record_interval = _positive(raw, "record_interval", required=True)
        if record_interval > t_end:
            raise ConfigError(
                "record_interval", "record_interval must not exceed t_end"
            )
        try:
            n_trajectories = int(raw.get("n_trajectories", 1))
        except (TypeError, ValueError):
            raise ConfigError("n_trajectories", "n_trajectories must be an integer") from None
        if n_trajectories < 1:
            raise ConfigError("n_trajectories", "n_trajectories must be >= 1")
        try:
            seed = int(raw.get("seed", 0))
        except (TypeError, ValueError):
            raise ConfigError("seed", "seed must be an integer") from None

        needs_hitting = engine in ("hitting", "both")
        beta = _positive(raw, "beta", required=needs_hitting)
        mu = _positive(raw, "mu", required=needs_hitting)
        gamma = _positive(raw, "gamma", required=False)
        dt = _positive(raw, "dt", required=False)

        if engine in ("continuous", "both"):
            derived = beta * mu / 2.0 if (beta is not None and mu is not None) else None
            if gamma is None:
                if derived is None:
                    raise ConfigError(
                        "gamma", "gamma is required (or derivable from beta and mu)"
                    )
                gamma = derived
            elif derived is not None and abs(gamma - derived) > 1e-9 * max(derived, 1.0):
                warnings.warn(
                    f"gamma={gamma} overrides beta*mu/2={derived}; the engines "
                    "are no longer an equivalent pair",
                    stacklevel=2,
                )

        known = {
            "scenario", "engine", "schedule", "t_end", "record_interval",
            "n_trajectories", "seed", "beta", "mu", "gamma", "dt",
            "hamiltonian", "store_states", "output_dir",
        }
        payload = {k: v for k, v in raw.items() if k not in known}
        return cls(
            scenario=scenario,
            engine=engine,
            t_end=t_end,
            record_interval=record_interval,
            n_trajectories=n_trajectories,
            seed=seed,
            beta=beta,
            mu=mu,
            gamma=gamma,
            dt=dt,
            schedule=schedule,
            hamiltonian=raw.get("hamiltonian"),
            store_states=bool(raw.get("store_states", False)),
            output_dir=raw.get("output_dir"),
            payload=payload,
        )


def load_preset(name: str) -> dict:
    if name not in PRESET_NAMES:
        raise ConfigError("config", f"unknown preset {name!r}; have {PRESET_NAMES}")
    text = resources.files("qreduce").joinpath(f"presets/{name}.json").read_text()
    return json.loads(text)


def load_config(path_or_preset: str) -> ScenarioConfig:
    """Load a config file; bare preset names resolve to shipped presets."""
    path = Path(path_or_preset)
    if path.exists():
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"config is not valid JSON: {exc}") from None
    else:
        raw = load_preset(path_or_preset)
    return ScenarioConfig.from_dict(raw)
