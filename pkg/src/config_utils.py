import copy
import json
import math
import os
from dataclasses import dataclass, field, fields
from typing import List, Optional

import numpy as np

QUANTITIES = ("amplitude", "residue", "spectrum", "precision")
VARIABLES = ("t", "N", "omega_c")
METHODS = ("exact", "markovian", "asymptotic", "asymptotic_exact", "ideal")
FORMATS = ("csv", "json")

DEFAULT_CONFIG = {
    "physics": {
        "s": 1.0,
        "eta": 0.02,
        "eta_ratio": None,
        "omega_c": 300.0,
        "omega0": 1.0,
        "gamma": math.pi,
        "mu": 1,
        "n_avg": 10.0,
        "t": 10.0,
        "t_factor": None,
    },
    "sweep": {
        "name": "custom",
        "quantity": "precision",
        "variable": "t",
        "start": 1.0,
        "stop": 10.0,
        "count": 10,
        "spacing": "linear",
        "series_variable": None,
        "series": [],
        "methods": ["exact"],
    },
    "solver": {
        "dt": None,
        "cutoff": None,
        "tol": 1e-12,
        "t_long": 200.0,
        "spectrum_modes": 400,
        "eps_rank": 1e-10,
    },
    "output": {
        "out": None,
        "format": "csv",
        "workers": None,
    },
}

# Figure parameterizations: s = 1, gamma = pi, eta = 0.02 unless the eta rule
# eta = 3(omega0 + gamma)/[omega_c Gamma(s)] with t = 10/omega_c applies.
PRESETS = {
    "fig1b": {
        "sweep": {"quantity": "amplitude", "variable": "t", "start": 0.0, "stop": 100.0, "count": 501,
                  "series_variable": "omega_c", "series": [150.0, 300.0], "methods": ["exact", "markovian"]},
    },
    "fig1c": {
        "sweep": {"quantity": "residue", "variable": "omega_c", "start": 100.0, "stop": 500.0, "count": 21},
        "solver": {"t_long": 200.0},
    },
    "fig1d": {
        "sweep": {"quantity": "spectrum", "variable": "omega_c", "start": 100.0, "stop": 400.0, "count": 7},
        "solver": {"spectrum_modes": 400},
    },
    "fig2a": {
        "physics": {"n_avg": 10.0},
        "sweep": {"quantity": "precision", "variable": "t", "start": 0.5, "stop": 10.0, "count": 20,
                  "series_variable": "omega_c", "series": [150.0, 250.0, 400.0],
                  "methods": ["exact", "markovian", "asymptotic", "ideal"]},
    },
    "fig2b": {
        "physics": {"t": 10.0},
        "sweep": {"quantity": "precision", "variable": "N", "start": 0.1, "stop": 100.0, "count": 31,
                  "spacing": "log", "series_variable": "omega_c", "series": [150.0, 250.0, 400.0],
                  "methods": ["exact", "markovian", "asymptotic", "ideal"]},
    },
    "fig3a": {
        "physics": {"eta_ratio": 3.0, "t_factor": 10.0},
        "sweep": {"quantity": "precision", "variable": "omega_c", "start": 10.0, "stop": 10000.0, "count": 31,
                  "spacing": "log", "series_variable": "N", "series": [1.0, 10.0, 100.0],
                  "methods": ["exact", "asymptotic", "ideal"]},
    },
    "fig3b": {
        "physics": {"eta_ratio": 3.0},
        "sweep": {"quantity": "residue", "variable": "omega_c", "start": 10.0, "stop": 10000.0, "count": 31,
                  "spacing": "log"},
        "solver": {"t_long": None},
    },
    "fig3c": {
        "physics": {"eta_ratio": 3.0, "t_factor": 10.0},
        "sweep": {"quantity": "precision", "variable": "N", "start": 0.1, "stop": 100.0, "count": 31,
                  "spacing": "log", "series_variable": "omega_c", "series": [500.0, 1092.0, 5000.0],
                  "methods": ["exact", "asymptotic", "asymptotic_exact"]},
    },
    "fig3d": {
        "physics": {"eta_ratio": 3.0},
        "sweep": {"quantity": "spectrum", "variable": "omega_c", "start": 10.0, "stop": 1000.0, "count": 7,
                  "spacing": "log"},
        "solver": {"spectrum_modes": 400},
    },
}


class ConfigError(ValueError):
    """Raised for malformed or inconsistent experiment configurations."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


def _section_of(key):
    for section, values in DEFAULT_CONFIG.items():
        if key in values:
            return section
    raise KeyError(key)


@dataclass
class ExperimentConfig:
    """Flat view of one experiment: physics, sweep axis, solver knobs, output."""

    # physics
    s: float = 1.0
    eta: float = 0.02
    eta_ratio: Optional[float] = None
    omega_c: float = 300.0
    omega0: float = 1.0
    gamma: float = math.pi
    mu: int = 1
    n_avg: float = 10.0
    t: float = 10.0
    t_factor: Optional[float] = None
    # sweep
    name: str = "custom"
    quantity: str = "precision"
    variable: str = "t"
    start: float = 1.0
    stop: float = 10.0
    count: int = 10
    spacing: str = "linear"
    series_variable: Optional[str] = None
    series: List[float] = field(default_factory=list)
    methods: List[str] = field(default_factory=lambda: ["exact"])
    # solver
    dt: Optional[float] = None
    cutoff: Optional[int] = None
    tol: float = 1e-12
    t_long: Optional[float] = 200.0
    spectrum_modes: int = 400
    eps_rank: float = 1e-10
    # output
    out: Optional[str] = None
    format: str = "csv"
    workers: Optional[int] = None

    def validate(self):
        """Check the configuration; raises ConfigError naming the offending key."""
        if self.quantity not in QUANTITIES:
            raise ConfigError("quantity", f"must be one of {QUANTITIES}, got '{self.quantity}'")
        if self.variable not in VARIABLES:
            raise ConfigError("variable", f"must be one of {VARIABLES}, got '{self.variable}'")
        if self.quantity == "amplitude" and self.variable != "t":
            raise ConfigError("variable", "amplitude sweeps run over t")
        if self.quantity in ("residue", "spectrum") and self.variable != "omega_c":
            raise ConfigError("variable", f"{self.quantity} sweeps run over omega_c")
        if self.series_variable is not None:
            if self.series_variable not in VARIABLES:
                raise ConfigError("series_variable", f"must be one of {VARIABLES}")
            if self.series_variable == self.variable:
                raise ConfigError("series_variable", "must differ from the sweep variable")
        if self.series and self.series_variable is None:
            raise ConfigError("series", "series values need a series_variable")
        if self.count < 1:
            raise ConfigError("count", "a sweep needs at least one point")
        if self.count > 1 and not self.start < self.stop:
            raise ConfigError("stop", "range must be nonempty and increasing")
        if self.spacing not in ("linear", "log"):
            raise ConfigError("spacing", f"must be 'linear' or 'log', got '{self.spacing}'")
        if self.spacing == "log" and self.start <= 0:
            raise ConfigError("start", "log spacing needs a positive start")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ConfigError("methods", f"unknown or empty methods {unknown}; choose from {METHODS}")
        if self.format not in FORMATS:
            raise ConfigError("format", f"must be one of {FORMATS}, got '{self.format}'")
        if self.mu < 1 or int(self.mu) != self.mu:
            raise ConfigError("mu", "number of runs must be a positive integer")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError("dt", "time step must be positive")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers", "worker budget must be at least 1")
        for key in ("omega_c", "omega0", "s"):
            if getattr(self, key) <= 0:
                raise ConfigError(key, "must be positive")
        if self.eta < 0:
            raise ConfigError("eta", "must be nonnegative")
        if self.gamma < 0:
            raise ConfigError("gamma", "must be nonnegative")
        return self

    def sweep_values(self):
        if self.count == 1:
            return np.array([float(self.start)])
        if self.spacing == "log":
            return np.logspace(math.log10(self.start), math.log10(self.stop), self.count)
        return np.linspace(self.start, self.stop, self.count)

    def series_values(self):
        return list(self.series) if self.series else [None]

    def to_dict(self):
        """Sectioned dictionary in the layout of DEFAULT_CONFIG."""
        result = {section: {} for section in DEFAULT_CONFIG}
        for f in fields(self):
            value = getattr(self, f.name)
            result[_section_of(f.name)][f.name] = list(value) if isinstance(value, list) else value
        return result

    @classmethod
    def from_dict(cls, data):
        """Build from a sectioned (or flat) dictionary, coercing types."""
        merged = merge_config(DEFAULT_CONFIG, data)
        flat = {}
        for section in merged.values():
            flat.update(section)
        return cls(**{f.name: _coerce(f.name, flat[f.name]) for f in fields(cls)}).validate()


_FLOAT_KEYS = {"s", "eta", "eta_ratio", "omega_c", "omega0", "gamma", "n_avg", "t", "t_factor",
               "start", "stop", "dt", "tol", "t_long", "eps_rank"}
_INT_KEYS = {"mu", "count", "cutoff", "spectrum_modes", "workers"}


def _coerce(key, value):
    if value is None:
        return None
    try:
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _INT_KEYS:
            as_float = float(value)
            if as_float != int(as_float):
                raise ValueError(f"{value} is not an integer")
            return int(as_float)
        if key == "series":
            return [float(v) for v in value]
        if key == "methods":
            return [value] if isinstance(value, str) else [str(v) for v in value]
        return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(key, f"invalid value {value!r} ({e})") from e


def merge_config(base, overrides):
    """Merge sectioned or flat overrides into a copy of `base`."""
    merged = copy.deepcopy(base)
    for key, value in (overrides or {}).items():
        if key in merged and isinstance(value, dict):
            for inner_key, inner_value in value.items():
                if inner_key not in merged[key]:
                    raise ConfigError(inner_key, f"unknown key in section '{key}'")
                merged[key][inner_key] = inner_value
        else:
            try:
                merged[_section_of(key)][key] = value
            except KeyError:
                raise ConfigError(key, "unknown configuration key") from None
    return merged


def preset_config(name):
    """ExperimentConfig of a named figure preset."""
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset '{name}'; choose from {sorted(PRESETS)}")
    data = merge_config(DEFAULT_CONFIG, PRESETS[name])
    data["sweep"]["name"] = name
    return ExperimentConfig.from_dict(data)


def apply_overrides(config, **overrides):
    """Copy of `config` with non-None overrides applied (CLI flags win over files)."""
    data = config.to_dict()
    flat = {key: value for key, value in overrides.items() if value is not None}
    return ExperimentConfig.from_dict(merge_config(data, flat))


def save_config(config, path):
    """Save configuration to a JSON file. Returns (success, error)."""
    try:
        data = config.to_dict() if isinstance(config, ExperimentConfig) else config
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=4)
        return True, None
    except Exception as e:
        return False, f"Error saving configuration: {str(e)}"


def load_config(path):
    """
    Load an experiment configuration from a JSON file.

    A missing file yields the default configuration; malformed content raises
    ConfigError.
    """
    if not os.path.exists(path):
        return ExperimentConfig.from_dict({})
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError("file", f"{path} is not valid JSON ({e})") from e
    except OSError as e:
        raise ConfigError("file", f"cannot read {path} ({e})") from e
    if not isinstance(data, dict):
        raise ConfigError("file", f"{path} must contain a JSON object")
    return ExperimentConfig.from_dict(data)
