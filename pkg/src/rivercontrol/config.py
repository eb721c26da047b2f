"""Run configuration: strict TOML parsing, ``--set`` overrides and parameter building.

Layout of a configuration file::

    problem = "sediment"        # fishery | reservoir | algae | sediment | coupled
    seed = 0

    [sediment]                  # parameter block of the selected problem
    epsilon = 0.01

    [numerics]                  # grid sizes, tolerances, step sizes, caps
    dx = 0.0033333333333333335

    [output]
    directory = "out"

    [verify]                    # Monte Carlo check settings
    w0 = 1.0

Every block is optional; unknown sections and keys are rejected.
"""

from __future__ import annotations

import copy
import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .algae import AlgaeParams
from .coupled import CoupledParams
from .errors import ConfigurationError, ValidationError
from .fishery import FisheryParams
from .growth import GrowthCurve
from .regime import RegimeChain, load_chain, published_discharges_coupled, published_discharges_reservoir, synth_birth_death
from .reservoir import ReservoirParams
from .sediment import SedimentParams

PROBLEMS = ("fishery", "reservoir", "algae", "sediment", "coupled")


def _scalar_fields(cls, skip=()) -> dict:
    out = {}
    for f in dataclasses.fields(cls):
        if f.name in skip or f.default is dataclasses.MISSING:
            continue
        out[f.name] = f.default
    return out


# block name -> {key: default}; the default's type fixes the accepted type
SCHEMA: dict[str, dict] = {
    "fishery": {
        **_scalar_fields(FisheryParams, skip=("growth", "dt")),
        "growth_rate": GrowthCurve.rate,
        "growth_capacity": GrowthCurve.capacity,
        "initial_weight": GrowthCurve.initial_weight,
    },
    "reservoir": {
        **_scalar_fields(ReservoirParams, skip=("volume_penalty",)),
        "up_rate": 0.5,
        "down_rate": 0.5,
        "chain_file": "",
    },
    "algae": _scalar_fields(AlgaeParams),
    "sediment": _scalar_fields(SedimentParams),
    "coupled": {
        **_scalar_fields(CoupledParams, skip=("dt", "level", "output_times")),
        "multipliers": CoupledParams.multipliers,
        "n_regimes": 21,
        "stride": 1,
        "up_rate": 0.5,
        "down_rate": 0.5,
        "chain_file": "",
    },
    "numerics": {
        "n_nodes": 0,
        "tolerance": 0.0,
        "max_iterations": 0,
        "dx": 0.0,
        "dt": 0.0,
        "level": 0,
        "order": 5,
        "scheme": "upwind",
    },
    "output": {
        "directory": "out",
        "output_times": (0.0, 30.0, 60.0),
    },
    "verify": {
        "n_paths": 0,
        "allowance": 0.02,
        "band": math.inf,
        "solution": "",
        "horizon": 0.0,
        "w0": 1.0,
        "y0": 0.5,
        "i0": 0,
        "x0": (0.5, 0.5, 0.5),
    },
}

# numerics defaults per problem (0 / empty entries above mean "use these")
NUMERICS_DEFAULTS = {
    "fishery": {"dt": 0.01},
    "reservoir": {"n_nodes": 401, "tolerance": 1e-12, "max_iterations": 20000},
    "algae": {"n_nodes": 501, "tolerance": 1e-14, "max_iterations": 50},
    "sediment": {"dx": 1.0 / 300.0, "tolerance": 1e-10, "max_iterations": 1_000_000},
    "coupled": {"dt": 0.005, "level": 11},
}

VERIFY_PATHS = {"reservoir": 2000, "sediment": 10_000, "coupled": 2000}


@dataclass
class RunConfig:
    problem: str
    seed: int = 0
    blocks: dict = field(default_factory=dict)
    source: str | None = None

    def block(self, name: str) -> dict:
        return self.blocks.get(name, {})

    def value(self, section: str, key: str):
        """Configured value, else the problem default, else the schema default."""
        blk = self.block(section)
        if key in blk:
            return blk[key]
        if section == "numerics" and key in NUMERICS_DEFAULTS[self.problem]:
            return NUMERICS_DEFAULTS[self.problem][key]
        if section == "verify" and key == "n_paths":
            return VERIFY_PATHS.get(self.problem, 1000)
        return SCHEMA[section][key]

    @property
    def out_dir(self) -> Path:
        return Path(self.value("output", "directory"))

    def with_override(self, key: str, value) -> "RunConfig":
        cfg = copy.deepcopy(self)
        _apply(cfg, key, value)
        return cfg


def _coerce(section: str, key: str, value):
    name = f"{section}.{key}"
    default = SCHEMA[section][key]
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValidationError(f"{name} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{name} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{name} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ValidationError(f"{name} must be a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ValidationError(f"{name} must be a list of numbers, got {value!r}")
        return tuple(float(v) for v in value)
    raise ValidationError(f"{name}: unsupported value {value!r}")


def _apply(cfg: RunConfig, key: str, value) -> None:
    if key == "problem":
        if value not in PROBLEMS:
            raise ValidationError(f"problem must be one of {', '.join(PROBLEMS)}, got {value!r}")
        cfg.problem = value
        return
    if key == "seed":
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise ValidationError(f"seed must be a nonnegative integer, got {value!r}")
        cfg.seed = value
        return
    section, _, name = key.partition(".")
    if section not in SCHEMA or not name:
        raise ValidationError(f"unknown key {key!r}")
    if name not in SCHEMA[section]:
        raise ValidationError(f"unknown key {key!r}")
    cfg.blocks.setdefault(section, {})[name] = _coerce(section, name, value)


def parse_value(text: str):
    """TOML scalar or array literal; anything else is taken as a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_override(item: str) -> tuple[str, object]:
    key, sep, text = item.partition("=")
    if not sep or not key.strip():
        raise ValidationError(f"override {item!r} is not of the form key=value")
    return key.strip(), parse_value(text.strip())


def from_mapping(data: dict, source: str | None = None) -> RunConfig:
    if "problem" not in data:
        raise ValidationError("missing top-level key 'problem'")
    cfg = RunConfig(problem="fishery", source=source)
    for key, value in data.items():
        if isinstance(value, dict):
            if key not in SCHEMA:
                raise ValidationError(f"unknown section [{key}]")
            for name, v in value.items():
                _apply(cfg, f"{key}.{name}", v)
        elif key in ("problem", "seed"):
            _apply(cfg, key, value)
        else:
            raise ValidationError(f"unknown key {key!r}")
    return cfg


def load_config(path, overrides=()) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    cfg = from_mapping(data, str(path))
    for item in overrides:
        _apply(cfg, *parse_override(item))
    return cfg


def _kwargs(cfg: RunConfig, section: str, names) -> dict:
    blk = cfg.block(section)
    return {n: blk[n] for n in names if n in blk}


def _chain(cfg: RunConfig, section: str, discharges, n_default: int):
    blk = cfg.block(section)
    if blk.get("chain_file"):
        return load_chain(blk["chain_file"])
    n = cfg.value(section, "n_regimes") if section == "coupled" else n_default
    stride = cfg.value(section, "stride") if section == "coupled" else 1
    q = discharges[::stride]
    if stride < 1 or n < 1 or n > len(q):
        raise ValidationError(f"{section}.n_regimes must lie in 1..{len(q)} for stride {stride}")
    up, down = cfg.value(section, "up_rate"), cfg.value(section, "down_rate")
    if up == 0 and down == 0:
        # uncoupled regimes
        return RegimeChain(np.zeros((n, n)), q[:n])
    return synth_birth_death(n, up, down, q[:n])


def build_params(cfg: RunConfig):
    """Parameter object of the selected problem."""
    p = cfg.problem
    if p == "fishery":
        blk = cfg.block("fishery")
        growth = GrowthCurve(
            rate=blk.get("growth_rate", GrowthCurve.rate),
            capacity=blk.get("growth_capacity", GrowthCurve.capacity),
            initial_weight=blk.get("initial_weight", GrowthCurve.initial_weight),
        )
        kw = _kwargs(cfg, "fishery", _scalar_fields(FisheryParams, skip=("growth", "dt")))
        return FisheryParams(growth=growth, dt=cfg.value("numerics", "dt"), **kw)
    if p == "reservoir":
        kw = _kwargs(cfg, "reservoir", _scalar_fields(ReservoirParams, skip=("volume_penalty",)))
        return ReservoirParams(chain=_chain(cfg, "reservoir", published_discharges_reservoir(), 61), **kw)
    if p == "algae":
        return AlgaeParams(**cfg.block("algae"))
    if p == "sediment":
        return SedimentParams(**cfg.block("sediment"))
    kw = _kwargs(cfg, "coupled", list(_scalar_fields(CoupledParams, skip=("dt", "level", "output_times"))) + ["multipliers"])
    return CoupledParams(
        chain=_chain(cfg, "coupled", published_discharges_coupled(), 21),
        dt=cfg.value("numerics", "dt"),
        level=cfg.value("numerics", "level"),
        output_times=cfg.value("output", "output_times"),
        **kw,
    )
