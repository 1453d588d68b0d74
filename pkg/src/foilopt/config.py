"""Run configuration: nested dataclasses, YAML loading, dotted overrides.

Every experiment default lives here; the CLI echoes the fully resolved tree
into each run's metadata file so results are reproducible from the file
alone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .flow import Af2Params, FreestreamSpec
from .geometry import CstConfig
from .meshgen import FarFieldSpec, SmootherParams


@dataclass(frozen=True)
class GridSize:
    i_max: int = 49
    j_max: int = 31

    def __post_init__(self):
        if self.i_max % 2 == 0:
            raise ConfigError("i_max must be odd")
        if self.j_max < 3:
            raise ConfigError("j_max must be at least 3")


@dataclass(frozen=True)
class OptimizerConfig:
    rule: str = "fixed"  # fixed | armijo
    step: float = 2e-3
    max_iters: int = 1000
    grad_tol: float = 1e-4
    armijo_t0: float = 0.05
    armijo_theta: float = 0.5
    armijo_sigma: float = 0.1
    start_perturbation: float = 5e-3
    seed: int = 0

    def __post_init__(self):
        if self.rule not in ("fixed", "armijo"):
            raise ConfigError(f"unknown optimizer rule {self.rule!r}")


@dataclass(frozen=True)
class RunConfig:
    grid: GridSize = field(default_factory=GridSize)
    cst: CstConfig = field(default_factory=CstConfig)
    farfield: FarFieldSpec = field(default_factory=FarFieldSpec)
    freestream: FreestreamSpec = field(default_factory=FreestreamSpec)
    mesh_solver: SmootherParams = field(default_factory=SmootherParams)
    flow_solver: Af2Params = field(default_factory=Af2Params)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    adjoint_tol: float = 1e-10


_SECTION_TYPES = {
    "grid": GridSize,
    "cst": CstConfig,
    "farfield": FarFieldSpec,
    "freestream": FreestreamSpec,
    "mesh_solver": SmootherParams,
    "flow_solver": Af2Params,
    "optimizer": OptimizerConfig,
}


def _field_types(cls):
    return {f.name: f.type for f in dataclasses.fields(cls)}


def _coerce(cls, name, raw):
    ftypes = _field_types(cls)
    if name not in ftypes:
        raise ConfigError(f"unknown key {name!r} for section {cls.__name__}")
    ftype = ftypes[name]
    try:
        if ftype in ("int", int):
            if isinstance(raw, str):
                return int(raw)
            if isinstance(raw, float) and raw != int(raw):
                raise ConfigError(f"{name} must be an integer")
            return int(raw)
        if ftype in ("float", float):
            return float(raw)
        if ftype in ("str", str):
            return str(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot coerce {name}={raw!r}: {exc}") from exc
    raise ConfigError(f"unsupported field type {ftype!r} for {name}")


def _apply_section(section_obj, updates: dict):
    cls = type(section_obj)
    coerced = {k: _coerce(cls, k, v) for k, v in updates.items()}
    try:
        return dataclasses.replace(section_obj, **coerced)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(str(exc)) from exc


def build_config(tree: dict | None = None) -> RunConfig:
    """RunConfig from a nested key/value tree; unknown keys are rejected."""
    tree = dict(tree or {})
    cfg = RunConfig()
    sections = {}
    for key, value in tree.items():
        if key in _SECTION_TYPES:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a mapping")
            sections[key] = _apply_section(getattr(cfg, key), value)
        elif key == "adjoint_tol":
            sections[key] = float(value)
        else:
            raise ConfigError(f"unknown config section {key!r}")
    return dataclasses.replace(cfg, **sections)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        tree = yaml.safe_load(fh) or {}
    if not isinstance(tree, dict):
        raise ConfigError("config file must contain a key/value tree")
    return build_config(tree)


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    """Apply 'section.key=value' strings on top of an existing config."""
    sections: dict[str, dict] = {}
    flat: dict[str, str] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, name = key.split(".", 1)
            sections.setdefault(section, {})[name] = value
        else:
            flat[key] = value
    updates = {}
    for section, kv in sections.items():
        if section not in _SECTION_TYPES:
            raise ConfigError(f"unknown config section {section!r}")
        updates[section] = _apply_section(getattr(cfg, section), kv)
    if "adjoint_tol" in flat:
        updates["adjoint_tol"] = float(flat.pop("adjoint_tol"))
    if flat:
        raise ConfigError(f"unknown config keys {sorted(flat)}")
    return dataclasses.replace(cfg, **updates)


def flatten_config(cfg: RunConfig) -> dict:
    """Dotted-key view of every resolved parameter (for run metadata)."""
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            for g in dataclasses.fields(value):
                out[f"{f.name}.{g.name}"] = getattr(value, g.name)
        else:
            out[f.name] = value
    return out


def save_metadata(path, cfg: RunConfig, extra: dict | None = None):
    with open(path, "w") as fh:
        for key, value in sorted(flatten_config(cfg).items()):
            fh.write(f"{key} = {value!r}\n")
        for key, value in (extra or {}).items():
            fh.write(f"{key} = {value!r}\n")
