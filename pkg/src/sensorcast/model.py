"""Shared domain types and pipeline configuration."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

import yaml


class StressorKind(str, enum.Enum):
    PARTICULATE_MATTER = "particulate_matter"
    TEMPERATURE = "temperature"
    UVB_INDEX = "uvb_index"
    AMBIENT_LIGHT = "ambient_light"
    AIR_PRESSURE = "air_pressure"
    RELATIVE_HUMIDITY = "relative_humidity"
    CARBON_MONOXIDE = "carbon_monoxide"
    OTHER = "other"

    @classmethod
    def parse(cls, name: str) -> "StressorKind":
        """Map a stressor name to its kind; unknown names become OTHER."""
        try:
            return cls(name.strip().lower())
        except ValueError:
            return cls.OTHER

    @property
    def is_air_quality(self) -> bool:
        return self is not StressorKind.OTHER


DEFAULT_UNITS = {
    StressorKind.PARTICULATE_MATTER: "g/m3",
    StressorKind.TEMPERATURE: "degC",
    StressorKind.UVB_INDEX: "index",
    StressorKind.AMBIENT_LIGHT: "lux",
    StressorKind.AIR_PRESSURE: "mbar",
    StressorKind.RELATIVE_HUMIDITY: "%",
    StressorKind.CARBON_MONOXIDE: "ppm",
}

AIR_QUALITY = tuple(k for k in StressorKind if k.is_air_quality)

# Sampling interval bounds in minutes (min, max) per stressor.
SAMPLING_MINUTES = {
    StressorKind.PARTICULATE_MATTER: (10, 60),
    StressorKind.TEMPERATURE: (1, 5),
    StressorKind.UVB_INDEX: (10, 30),
    StressorKind.AMBIENT_LIGHT: (10, 30),
    StressorKind.AIR_PRESSURE: (1, 5),
    StressorKind.RELATIVE_HUMIDITY: (1, 5),
    StressorKind.CARBON_MONOXIDE: (30, 60),
}

# Reliability length constants c (m^2): wide for slowly varying quantities,
# narrow for local ones.
DEFAULT_RELIABILITY_C = {
    StressorKind.TEMPERATURE.value: 5000.0,
    StressorKind.AIR_PRESSURE.value: 5000.0,
    StressorKind.RELATIVE_HUMIDITY.value: 5000.0,
    StressorKind.PARTICULATE_MATTER.value: 1500.0,
    StressorKind.CARBON_MONOXIDE.value: 1500.0,
    StressorKind.AMBIENT_LIGHT.value: 1500.0,
    StressorKind.UVB_INDEX.value: 1500.0,
}

INTERPOLATION_METHODS = ("nearest", "natural", "linear", "idw")


@dataclass(frozen=True)
class SensorMeta:
    sensor_id: str
    latitude: float
    longitude: float
    elevation: float = 0.0
    is_virtual: bool = False


@dataclass(frozen=True, slots=True)
class RawReading:
    """One timestamped measurement.

    ``name`` keeps the original stressor label so that traffic quantities
    routed to :attr:`StressorKind.OTHER` stay distinguishable.
    """

    sensor_id: str
    stressor: StressorKind
    timestamp: datetime
    value: float
    name: str = ""
    unit: str = ""

    @property
    def label(self) -> str:
        return self.name or self.stressor.value


@dataclass(frozen=True)
class MapGridSpec:
    """Rectangular raster anchored at a corner point.

    Axis 1 points along ``bearing`` (degrees clockwise from north), axis 2
    points 90 degrees clockwise from axis 1. ``lengths`` are edge lengths in
    meters and ``counts`` the number of raster points along each axis.
    """

    origin_lat: float
    origin_lon: float
    bearing: float = 0.0
    lengths: tuple[float, float] = (1000.0, 1000.0)
    counts: tuple[int, int] = (20, 20)

    def violations(self) -> list[str]:
        out = []
        if not all(math.isfinite(v) and v > 0 for v in self.lengths):
            out.append("grid lengths must be > 0")
        if not all(int(n) == n and n >= 2 for n in self.counts):
            out.append("grid counts must be integers >= 2")
        if not (0.0 <= self.bearing < 360.0):
            out.append("grid bearing must be in [0, 360)")
        return out


@dataclass(frozen=True)
class AnalyticalRecord:
    """One row of the analytical store.

    ``produced_at`` is the instant the content describes: forecast start for
    forecasts and bands, slot start for maps.
    """

    kind: str
    stressor: str
    produced_at: datetime
    wkt: str
    reference: Mapping[str, Any] = field(default_factory=dict)
    metadata: Mapping[str, Any] = field(default_factory=dict)

    KINDS = ("forecast", "band", "value_map", "reliability_map", "model")


@dataclass(frozen=True)
class PipelineConfig:
    step_minutes: int = 60
    hampel_window_half: int = 3
    hampel_k: float = 3.0
    low_cut: float = 0.2
    high_cut: float = 6.0
    typical_window_days: int = 30
    arx_p: int = 2
    arx_q: int = 2
    impute_order: int = 2
    n_trajectories: int = 1000
    horizon_steps: int = 24
    confidence_levels: tuple[float, ...] = (0.90, 0.95, 0.98)
    min_bucket_count: int = 10
    grid: MapGridSpec | None = None
    grid_counts: tuple[int, int] = (20, 20)
    map_slots: int = 24
    interp_method: str = "idw"
    idw_power: float = 2.0
    reliability_c: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_RELIABILITY_C)
    )
    timezone: str = "Europe/Budapest"
    seed: int = 0
    workers: int = 1

    def reliability_constant(self, stressor: str) -> float:
        return float(self.reliability_c.get(stressor, 1500.0))


def validate_config(cfg: PipelineConfig) -> list[str]:
    """Return human-readable invariant violations; empty when valid."""
    out: list[str] = []
    for name in (
        "step_minutes",
        "hampel_window_half",
        "typical_window_days",
        "arx_p",
        "arx_q",
        "impute_order",
        "n_trajectories",
        "horizon_steps",
        "min_bucket_count",
        "map_slots",
        "workers",
    ):
        value = getattr(cfg, name)
        if int(value) != value or value < 1:
            out.append(f"{name} must be ≥ 1")
    if cfg.step_minutes >= 1 and 1440 % cfg.step_minutes:
        out.append("step_minutes must divide 1440")
    if not cfg.hampel_k > 0:
        out.append("hampel_k must be > 0")
    if not (0 <= cfg.low_cut < cfg.high_cut):
        out.append("low_cut/high_cut must satisfy 0 ≤ low_cut < high_cut")
    elif cfg.step_minutes >= 1 and cfg.high_cut > 720.0 / cfg.step_minutes:
        out.append("high_cut must not exceed the Nyquist frequency")
    if cfg.arx_p + cfg.arx_q < 1:
        out.append("arx_p + arx_q must be ≥ 1")
    levels = cfg.confidence_levels
    if not levels or not all(0.0 < a < 1.0 for a in levels):
        out.append("confidence_levels must lie in (0, 1)")
    if cfg.interp_method not in INTERPOLATION_METHODS:
        out.append(f"interp_method must be one of {', '.join(INTERPOLATION_METHODS)}")
    if not cfg.idw_power > 0:
        out.append("idw_power must be > 0")
    if any(not (c > 0) for c in cfg.reliability_c.values()):
        out.append("reliability_c values must be > 0")
    if cfg.grid is not None:
        out.extend(cfg.grid.violations())
    if not all(int(n) == n and n >= 2 for n in cfg.grid_counts):
        out.append("grid_counts must be integers >= 2")
    return out


def config_to_dict(cfg: PipelineConfig) -> dict[str, Any]:
    data = dataclasses.asdict(cfg)
    data["confidence_levels"] = list(cfg.confidence_levels)
    data["grid_counts"] = list(cfg.grid_counts)
    data["reliability_c"] = dict(cfg.reliability_c)
    if cfg.grid is not None:
        data["grid"]["lengths"] = list(cfg.grid.lengths)
        data["grid"]["counts"] = list(cfg.grid.counts)
    return data


def config_from_dict(data: Mapping[str, Any]) -> PipelineConfig:
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    kwargs = dict(data)
    if "confidence_levels" in kwargs:
        kwargs["confidence_levels"] = tuple(float(a) for a in kwargs["confidence_levels"])
    if "grid_counts" in kwargs:
        kwargs["grid_counts"] = tuple(int(n) for n in kwargs["grid_counts"])
    if "reliability_c" in kwargs:
        merged = dict(DEFAULT_RELIABILITY_C)
        merged.update({k: float(v) for k, v in kwargs["reliability_c"].items()})
        kwargs["reliability_c"] = merged
    grid = kwargs.get("grid")
    if isinstance(grid, Mapping):
        g = dict(grid)
        g["lengths"] = tuple(float(v) for v in g.get("lengths", (1000.0, 1000.0)))
        g["counts"] = tuple(int(v) for v in g.get("counts", (20, 20)))
        kwargs["grid"] = MapGridSpec(**g)
    return PipelineConfig(**kwargs)


def load_config(path: str | Path) -> PipelineConfig:
    """Read a YAML configuration file; missing keys take their defaults."""
    text = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(text) or {}
    if not isinstance(data, Mapping):
        raise ValueError(f"{path}: top level must be a mapping")
    return config_from_dict(data)


def dump_config(cfg: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(
        yaml.safe_dump(config_to_dict(cfg), sort_keys=False), encoding="utf-8"
    )


def utc(dt: datetime) -> datetime:
    """Normalise to an aware UTC datetime with second precision."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0)
