"""Experiment configuration and its TOML file format.

A config file mirrors the :class:`ExperimentConfig` fields. The ``[system]``
table mirrors :class:`~clrajo.channel.SystemConfig`, ``[sweep]`` holds the
single sweep axis and ``[two_phase]`` (optional) the coherence times. Unknown
keys are rejected.

Example::

    trials = 200
    seed = 7
    category = "near-near"
    estimators = ["clra_jo", "clra_ls"]

    [sweep]
    axis = "snr_db"
    values = [-10, 0, 10, 20]

    [system]
    bs_shape = [8, 4]
    users = 4
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .channel import AUTO, SystemConfig
from .estimator import DEFAULT_T_MAX, ESTIMATORS
from .protocol import COMBINERS, DEFAULT_COMBINER_SEED

SWEEP_AXES = ("snr_db", "B_c", "K", "category")
CATEGORIES = ("far-far", "far-near", "near-near", "custom")
SNR_MODES = ("fixed-noise", "pathloss")

# link distances of each category as multiples of the (MIMO) Rayleigh
# distance; taken from the 128-element setup (z_f 250/150 m against 196.608 m,
# z_h in [60, 70] / [20, 30] m against 49.152 m)
CATEGORY_FACTORS = {
    "far": {"z_f": 250 / 196.608, "z_h": (60 / 49.152, 70 / 49.152)},
    "near": {"z_f": 150 / 196.608, "z_h": (20 / 49.152, 30 / 49.152)},
}


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


@dataclass(frozen=True)
class Sweep:
    axis: str = "snr_db"
    values: tuple = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if self.axis == "category":
            bad = [v for v in self.values if v not in CATEGORIES]
            if bad:
                raise ConfigError(f"unknown categories {bad}")
        elif self.axis in ("B_c", "K"):
            if any(int(v) != v or v < 1 for v in self.values):
                raise ConfigError(f"{self.axis} values must be positive integers")
            object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        else:
            values = tuple(float(v) for v in self.values)
            if any(math.isnan(v) for v in values):
                raise ConfigError("snr_db values must not be NaN")
            object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class TwoPhase:
    T_f: float = 6.0
    T_h: float = 1.0

    def __post_init__(self):
        if not (self.T_f > self.T_h > 0):
            raise ConfigError("two-phase timing needs T_f > T_h > 0")
        ratio = self.T_f / self.T_h
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError(f"T_f={self.T_f} is not an integer multiple of T_h={self.T_h}")

    @property
    def slots(self) -> int:
        return int(round(self.T_f / self.T_h))


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    sweep: Sweep = field(default_factory=Sweep)
    category: str = "near-near"
    trials: int = 200
    seed: int = 0
    estimators: tuple = ("clra_jo", "clra_ls")
    t_max: int = DEFAULT_T_MAX
    B_c: int = 6
    B_r: int = 1
    snr_db: float = 0.0
    snr_mode: str = "fixed-noise"
    pilot_length: int | None = None
    two_phase: TwoPhase | None = None
    combiner: str = "scrambled-dft"
    combiner_seed: int = DEFAULT_COMBINER_SEED

    def __post_init__(self):
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.category not in CATEGORIES:
            raise ConfigError(f"category must be one of {CATEGORIES}")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown or not self.estimators:
            raise ConfigError(f"unknown estimators {sorted(unknown)}; choose from {sorted(ESTIMATORS)}")
        if self.t_max < 0 or self.B_c < 1 or self.B_r < 1:
            raise ConfigError("t_max must be >= 0 and B_c, B_r >= 1")
        if math.isnan(self.snr_db):
            raise ConfigError("snr_db must not be NaN")
        if self.snr_mode not in SNR_MODES:
            raise ConfigError(f"snr_mode must be one of {SNR_MODES}")
        if self.combiner not in COMBINERS:
            raise ConfigError(f"combiner must be one of {COMBINERS}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sweep"]["values"] = list(self.sweep.values)
        d["estimators"] = list(self.estimators)
        for key in ("bs_shape", "ris_shape", "ue_shape", "z_h"):
            d["system"][key] = list(d["system"][key])
        return {k: v for k, v in d.items() if v is not None}

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def point(self, value) -> "ExperimentConfig":
        """Config for one sweep point, with the swept quantity applied."""
        axis = self.sweep.axis
        if axis == "snr_db":
            return replace(self, snr_db=float(value))
        if axis == "B_c":
            return replace(self, B_c=int(value))
        if axis == "K":
            return replace(self, system=self.system.with_(users=int(value)))
        return replace(self, category=value)


def category_system(system: SystemConfig, category: str) -> SystemConfig:
    """Place the BS, RIS and users so that each link lands in the regime the
    category names (distances scale with the Rayleigh distances)."""
    if category == "custom":
        return system
    f_reg, h_reg = category.split("-")
    z_f = CATEGORY_FACTORS[f_reg]["z_f"] * system.z_mrd
    lo, hi = CATEGORY_FACTORS[h_reg]["z_h"]
    near = CATEGORY_FACTORS["near"]
    return system.with_(
        z_f=z_f, z_h=(lo * system.z_rd, hi * system.z_rd),
        regime_bsris=AUTO, regime_risuser=AUTO,
        z_ref_bsris=near["z_f"] * system.z_mrd,
        z_ref_risuser=0.5 * (near["z_h"][0] + near["z_h"][1]) * system.z_rd,
    )


def _build(cls, data: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    nested = {}
    for key, cls in (("system", SystemConfig), ("sweep", Sweep), ("two_phase", TwoPhase)):
        if key in data:
            if not isinstance(data[key], dict):
                raise ConfigError(f"[{key}] must be a table")
            nested[key] = _build(cls, data.pop(key), f"[{key}]")
    data.update(nested)
    return _build(ExperimentConfig, data, "top level")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def _toml_value(val) -> str:
    if isinstance(val, float) and not math.isfinite(val):
        return "nan" if math.isnan(val) else ("inf" if val > 0 else "-inf")
    if isinstance(val, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in val) + "]"
    return json.dumps(val)


def dump_config(cfg: ExperimentConfig) -> str:
    """Render ``cfg`` as TOML text that :func:`load_config` reads back."""
    d = cfg.to_dict()
    lines = []
    tables = {k: d.pop(k) for k in ("system", "sweep", "two_phase") if k in d}
    for key, val in d.items():
        lines.append(f"{key} = {_toml_value(val)}")
    for name, table in tables.items():
        lines.append(f"\n[{name}]")
        for key, val in table.items():
            lines.append(f"{key} = {_toml_value(val)}")
    return "\n".join(lines) + "\n"
