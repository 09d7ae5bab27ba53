"""Strict JSON run configuration with defaults for every section."""

from __future__ import annotations

import copy
import hashlib
import json
import platform
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import DatasetSpec, ValidationPolicy
from .energies import EnergyModel, MaterialParams
from .lp.lattice import LatticeSpec
from .nn.networks import FICNN, PICNN, Architecture
from .nn.train import TrainConfig
from .ssv import n_minors


class ConfigError(ValueError):
    pass


_LATTICE = {"lo": -1.05, "hi": 1.05, "count": 101, "spacing": "quadratic", "refine_at": None, "axes": None}

DEFAULTS = {
    "model": {"kind": "ksd", "d": 2, **MaterialParams().to_dict()},
    "lattice": dict(_LATTICE),
    "envelope": {
        "parameters": None,  # defaults to dataset.parameters
        "queries": None,  # None: the lattice points; a list of points; or {"lattice": {...}}
        "cache_dir": None,
    },
    "dataset": {
        "parameters": [[]],
        "augment": False,
        "source": None,  # analytic when the model has a closed-form envelope, else svpc_lp
        "validation": {"kind": "random_fraction", "fraction": 0.3, "seed": 0, "values": [],
                       "samples_per_value": 0},
    },
    "network": {"hidden": [10, 20], "param_hidden": None},
    "train": TrainConfig().to_dict(),
    "predict": {"zeta": None, "nu_k": None, "alpha_k": None},
    "eval": {
        "grid": {"lo": -1.05, "hi": 1.05, "n": 50},
        "parameters": None,  # defaults to dataset.parameters
        "reference": None,  # analytic, or {"fields": [{"zeta": [...], "path": "..."}]}
        "clamp_alpha": True,
        "symmetrize": False,
        "cross_sections": {"axes": ["(t,0)", "(t,t)"], "t_range": [-1.05, 1.05], "samples": 201,
                           "svg": False},
    },
}

# keys whose values are free-form (not recursed into)
_LEAVES = {("lattice", "axes"), ("envelope", "queries"), ("eval", "reference"), ("dataset", "validation", "values")}


def _merge(default, user, path=()):
    out = copy.deepcopy(default)
    for key, val in user.items():
        if key not in default:
            where = ".".join(path + (key,))
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(default[key], dict) and path + (key,) not in _LEAVES:
            if not isinstance(val, dict):
                raise ConfigError(f"config key {'.'.join(path + (key,))!r} must be an object")
            out[key] = _merge(default[key], val, path + (key,))
        else:
            out[key] = val
    return out


def resolve(user: dict | None) -> dict:
    """Merge ``user`` over the defaults; unknown keys are rejected."""
    if user is None:
        user = {}
    if not isinstance(user, dict):
        raise ConfigError("config must be a JSON object")
    cfg = _merge(DEFAULTS, user)
    if cfg["dataset"]["source"] is None:
        cfg["dataset"]["source"] = "analytic" if cfg["model"]["kind"] in ("ksd", "gksd") else "svpc_lp"
    for section in ("envelope", "eval"):
        if cfg[section]["parameters"] is None:
            cfg[section]["parameters"] = copy.deepcopy(cfg["dataset"]["parameters"])
    if cfg["eval"]["reference"] is None:
        cfg["eval"]["reference"] = "analytic"
    if cfg["network"]["param_hidden"] is None:
        cfg["network"]["param_hidden"] = list(cfg["network"]["hidden"]) if model(cfg).arity else []
    try:
        # build everything once so schema errors surface as ConfigError
        model(cfg), lattice_spec(cfg), train_config(cfg), architecture(cfg)
        dataset_spec(cfg)
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config: {exc}") from exc
    return cfg


def load_config(path) -> dict:
    if path is None:
        return resolve({})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return resolve(user)


def model(cfg) -> EnergyModel:
    return EnergyModel.from_dict(cfg["model"])


def lattice_spec(cfg, section=None) -> LatticeSpec:
    lat = section if section is not None else cfg["lattice"]
    unknown = set(lat) - set(_LATTICE)
    if unknown:
        raise ConfigError(f"unknown lattice keys {sorted(unknown)}")
    if lat.get("axes") is not None:
        return LatticeSpec.from_dict({"axes": lat["axes"]})
    full = {**_LATTICE, **lat}
    return LatticeSpec.uniform(cfg["model"]["d"], full["lo"], full["hi"], full["count"], full["spacing"],
                               full["refine_at"])


def dataset_spec(cfg) -> DatasetSpec:
    ds = cfg["dataset"]
    return DatasetSpec(
        model=model(cfg),
        lattice=lattice_spec(cfg),
        parameters=tuple(tuple(z) for z in ds["parameters"]),
        augment=bool(ds["augment"]),
        validation=ValidationPolicy(**ds["validation"]),
        source=ds["source"],
    )


def train_config(cfg) -> TrainConfig:
    return TrainConfig(**cfg["train"])


def architecture(cfg) -> Architecture:
    m = model(cfg)
    net = cfg["network"]
    variant = PICNN if m.arity else FICNN
    return Architecture(variant, n_minors(m.d), m.arity, tuple(net["hidden"]),
                        tuple(net["param_hidden"]) if m.arity else ())


def versions() -> dict:
    return {"svpcnet": __version__, "numpy": np.__version__, "python": platform.python_version()}


def write_resolved(cfg: dict, out_dir, *, command: str, seeds: dict | None = None) -> Path:
    """Resolved config next to a run's outputs; contains no timestamps."""
    doc = {"command": command, "config": cfg, "versions": versions(), "seeds": seeds or {}}
    path = Path(out_dir) / "resolved_config.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def content_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]
