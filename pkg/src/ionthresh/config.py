"""Experiment configuration files: schema, defaults and validation.

A configuration is a JSON object::

    {
      "config_version": 1,
      "experiment": "thresholds",
      "seed": 20240917,
      "tolerance": 1e-10,
      "model": {...},
      "schedules": {"R": [1, 2, 4, 8]},
      "options": {...}
    }

Unknown fields are rejected with the dotted path of the offending key.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path

from .model import ModelSpec
from .spectral import DEFAULT_SEED

CONFIG_VERSION = 1

EXPERIMENTS = ("spectrum", "thresholds", "decay", "ir-study", "trial-state", "fock-selftest")

# sweep axes per experiment, in the order jobs are enumerated
AXES = {
    "spectrum": ("L",),
    "thresholds": ("R",),
    "decay": ("L", "beta"),
    "ir-study": ("mu",),
    "trial-state": ("R",),
    "fock-selftest": (),
}

SCHEDULE_KEYS = ("R", "mu", "beta", "lambda", "L")

OPTION_DEFAULTS = {
    "spectrum": {"k": 4},
    "thresholds": {"coarse_check": True, "relative_tolerance": None},
    "decay": {
        "eps": [1e-2, 1e-3],
        "expect": "localized",
        "ratio_max": 1.1,
        "ratio_min": 1.5,
        "eps_tolerance": 0.01,
        "ct_R": None,
        "agmon_window": None,
        "agmon_sigma_R": None,
        "agmon_fraction": 0.9,
    },
    "ir-study": {"R": 6.0, "include_zero_cutoff": False},
    "trial-state": {
        "n_prime": 1,
        "cutoff": 2.0,
        "photon_radius": 2.0,
        "sigma_R": None,
        "gap_fraction": 0.02,
        "normalization_tolerance": 1e-6,
    },
    "fock-selftest": {"n_modes": [1, 2, 3, 4], "n_max": [0, 1, 2, 3], "tolerance": 1e-10},
}

SCHEDULE_DEFAULTS = {
    "spectrum": {"L": [1]},
    "thresholds": {},
    "decay": {"L": [1], "beta": [0.2], "lambda": [-0.6]},
    "ir-study": {},
    "trial-state": {},
    "fock-selftest": {},
}

REQUIRED_SCHEDULES = {
    "thresholds": ("R",),
    "ir-study": ("mu",),
    "trial-state": ("R",),
}

_MODEL_KEYS = {
    "": {"grid", "coupling", "potentials", "n_electrons", "statistics", "n_modes", "n_max", "max_dimension"},
    "grid": {"extent", "points"},
    "coupling": {"alpha", "uv_cutoff", "ir_cutoff", "spin_g"},
    "potentials": {"v", "w", "decay_tolerance"},
    "potentials.v": {"kind", "amplitude", "width"},
    "potentials.w": {"kind", "amplitude", "width"},
}

_TOP_KEYS = {"config_version", "experiment", "seed", "tolerance", "model", "schedules", "options"}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def _unknown(obj: dict, allowed: set, prefix: str) -> None:
    for key in obj:
        if key not in allowed:
            path = f"{prefix}.{key}" if prefix else key
            raise ConfigError(path, f"unknown field (allowed: {', '.join(sorted(allowed))})")


def _number(value, path: str, *, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(path, f"expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(path, f"must be positive, got {value!r}")
    return float(value)


def _check_model(model, path: str = "model") -> ModelSpec:
    if not isinstance(model, dict):
        raise ConfigError(path, "expected an object")
    for sub, allowed in _MODEL_KEYS.items():
        node = model
        for part in [p for p in sub.split(".") if p]:
            node = node.get(part, {}) if isinstance(node, dict) else {}
        if not isinstance(node, dict):
            raise ConfigError(f"{path}.{sub}", "expected an object")
        _unknown(node, allowed, f"{path}.{sub}" if sub else path)
    if "grid" not in model:
        raise ConfigError(f"{path}.grid", "required field missing")
    try:
        return ModelSpec.from_dict(model)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc


def validate(raw: dict) -> dict:
    """Return a normalized copy of ``raw`` with defaults filled in."""
    if not isinstance(raw, dict):
        raise ConfigError("", "configuration must be a JSON object")
    _unknown(raw, _TOP_KEYS, "")
    version = raw.get("config_version")
    if version != CONFIG_VERSION:
        raise ConfigError("config_version", f"expected {CONFIG_VERSION}, got {version!r}")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"expected one of {', '.join(EXPERIMENTS)}, got {exp!r}")
    cfg = {"config_version": CONFIG_VERSION, "experiment": exp}

    seed = raw.get("seed", DEFAULT_SEED)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", f"expected a nonnegative integer, got {seed!r}")
    cfg["seed"] = seed
    cfg["tolerance"] = _number(raw.get("tolerance", 1e-10), "tolerance", positive=True)

    if exp == "fock-selftest":
        if "model" in raw:
            raise ConfigError("model", "fock-selftest takes no model")
    else:
        if "model" not in raw:
            raise ConfigError("model", "required field missing")
        cfg["model"] = _check_model(raw["model"]).to_dict()

    scheds = raw.get("schedules", {})
    if not isinstance(scheds, dict):
        raise ConfigError("schedules", "expected an object")
    _unknown(scheds, set(SCHEDULE_KEYS), "schedules")
    merged = dict(copy.deepcopy(SCHEDULE_DEFAULTS[exp]))
    for key, values in scheds.items():
        path = f"schedules.{key}"
        if not isinstance(values, list) or not values:
            raise ConfigError(path, "expected a nonempty list")
        if key == "L":
            if any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in values):
                raise ConfigError(path, "box factors must be positive integers")
            merged[key] = [int(v) for v in values]
        else:
            merged[key] = [_number(v, f"{path}[{i}]") for i, v in enumerate(values)]
        if len(set(merged[key])) != len(merged[key]):
            raise ConfigError(path, "duplicate entries")
    for key in REQUIRED_SCHEDULES.get(exp, ()):
        if key not in merged:
            raise ConfigError(f"schedules.{key}", f"required for experiment {exp}")
    for key in ("R", "mu", "beta"):
        if any(v < 0 for v in merged.get(key, [])):
            raise ConfigError(f"schedules.{key}", "entries must be nonnegative")
    cfg["schedules"] = merged

    opts = raw.get("options", {})
    if not isinstance(opts, dict):
        raise ConfigError("options", "expected an object")
    defaults = OPTION_DEFAULTS[exp]
    _unknown(opts, set(defaults), "options")
    merged_opts = copy.deepcopy(defaults)
    merged_opts.update(copy.deepcopy(opts))
    if exp == "decay" and merged_opts["expect"] not in ("localized", "delocalized"):
        raise ConfigError("options.expect", "expected 'localized' or 'delocalized'")
    cfg["options"] = merged_opts
    return cfg


def load(path: str | Path) -> dict:
    """Read and validate a configuration file."""
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise ConfigError("", f"config file not found: {p}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON in {p}: {exc}") from exc
    return validate(raw)


def canonical(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()


def model_spec(cfg: dict) -> ModelSpec:
    return ModelSpec.from_dict(cfg["model"])
