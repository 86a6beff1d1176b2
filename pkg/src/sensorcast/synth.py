"""Synthetic sensor networks with known ground truth.

Each (sensor, stressor) series is

    level + field(position) + scale * x(t)

where ``field`` is a smooth spatial function (plane plus Gaussian bump) and
``x`` is an hourly ARX(2, 2) process driven by a diurnal input profile and
Gaussian innovations. Readings sample the piecewise-linear interpolation of
the hourly process at a per-sensor cadence inside the stressor's nominal
sampling range, then get thinned by dropout and spiked by outliers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .geo import LocalFrame, unproject
from .ingest import format_timestamp, write_network, write_readings
from .model import (
    AIR_QUALITY,
    DEFAULT_UNITS,
    SAMPLING_MINUTES,
    RawReading,
    SensorMeta,
    StressorKind,
)
from .preprocess import local_slots

# (level, temporal scale, spatial amplitude) in stressor units.
STRESSOR_SCALES = {
    StressorKind.PARTICULATE_MATTER: (3.0e-5, 4.0e-6, 3.0e-6),
    StressorKind.TEMPERATURE: (20.0, 1.5, 0.8),
    StressorKind.UVB_INDEX: (4.0, 0.8, 0.2),
    StressorKind.AMBIENT_LIGHT: (5000.0, 1500.0, 400.0),
    StressorKind.AIR_PRESSURE: (1013.0, 1.2, 0.3),
    StressorKind.RELATIVE_HUMIDITY: (55.0, 5.0, 2.0),
    StressorKind.CARBON_MONOXIDE: (0.6, 0.12, 0.08),
}

BURN_IN_HOURS = 200


@dataclass(frozen=True)
class SynthSpec:
    n_sensors: int = 10
    extent: tuple[float, float] = (1000.0, 1000.0)
    origin: tuple[float, float] = (47.48, 19.02)
    start: datetime = datetime(2016, 5, 1, tzinfo=timezone.utc)
    days: int = 35
    stressors: tuple[StressorKind, ...] = AIR_QUALITY
    theta: tuple[float, float, float, float] = (0.5, 0.2, 1.0, 0.3)
    noise_std: float = 0.3
    dropout: float = 0.0
    outlier_rate: float = 0.0
    outlier_magnitude: float = 10.0
    cadences: dict = field(default_factory=lambda: dict(SAMPLING_MINUTES))
    min_spacing: float = 50.0
    timezone: str = "Europe/Budapest"
    seed: int = 0

    def violations(self) -> list[str]:
        out = []
        if self.n_sensors < 1:
            out.append("n_sensors must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            out.append("dropout must lie in [0, 1)")
        if not (0.0 <= self.outlier_rate < 1.0):
            out.append("outlier_rate must lie in [0, 1)")
        for kind in self.stressors:
            lo, hi = SAMPLING_MINUTES[kind]
            c_lo, c_hi = self.cadences[kind]
            if not (lo <= c_lo <= c_hi <= hi):
                out.append(f"{kind.value} cadence outside the nominal sampling range")
        if self.days < 1:
            out.append("days must be >= 1")
        return out


def diurnal_profile(kind: StressorKind) -> np.ndarray:
    """Standardised 24-hour input profile; peaks differ per stressor."""
    peak = {StressorKind.TEMPERATURE: 15, StressorKind.UVB_INDEX: 13,
            StressorKind.AMBIENT_LIGHT: 13, StressorKind.RELATIVE_HUMIDITY: 5,
            StressorKind.PARTICULATE_MATTER: 8, StressorKind.CARBON_MONOXIDE: 18,
            StressorKind.AIR_PRESSURE: 10}.get(kind, 12)
    h = np.arange(24)
    prof = np.cos(2 * np.pi * (h - peak) / 24) + 0.3 * np.cos(4 * np.pi * (h - peak) / 24)
    return (prof - prof.mean()) / prof.std()


@dataclass
class GroundTruth:
    spec: SynthSpec
    sensors: list[SensorMeta]
    positions: np.ndarray
    hour0: datetime
    latent: dict[tuple[str, str], np.ndarray]
    field_values: dict[tuple[str, str], float]
    field_params: dict[str, dict]
    outliers: list[tuple[str, str, datetime]]
    n_planned: int = 0
    n_dropped: int = 0

    def value(self, sensor_id: str, stressor: str, times) -> np.ndarray:
        """Noise-free ground truth at UTC ``times`` (datetime64 or datetimes)."""
        key = (sensor_id, stressor)
        return _truth_values(StressorKind(stressor), self.hour0, self.latent[key],
                             self.field_values[key], times)

    def field_at(self, stressor: str, xy) -> np.ndarray:
        return _field(self.field_params[stressor], np.asarray(xy, dtype=float), self.spec.extent)

    def to_json(self) -> dict:
        return {
            "theta": list(self.spec.theta),
            "noise_std": self.spec.noise_std,
            "seed": self.spec.seed,
            "hour0": format_timestamp(self.hour0),
            "sensors": [s.sensor_id for s in self.sensors],
            "positions": self.positions.tolist(),
            "diurnal": {k.value: diurnal_profile(k).tolist() for k in self.spec.stressors},
            "field_params": self.field_params,
            "field_values": {f"{s}|{k}": v for (s, k), v in self.field_values.items()},
            "latent": {f"{s}|{k}": v.tolist() for (s, k), v in self.latent.items()},
            "outliers": [[s, k, format_timestamp(t)] for s, k, t in self.outliers],
            "n_planned": self.n_planned,
            "n_dropped": self.n_dropped,
        }


@dataclass
class SynthOutput:
    network_path: Path | None
    readings_path: Path | None
    truth_path: Path | None
    truth: GroundTruth
    readings: list[RawReading]


def _truth_values(kind: StressorKind, hour0: datetime, x: np.ndarray,
                  field_value: float, times) -> np.ndarray:
    level, scale, _ = STRESSOR_SCALES[kind]
    t = np.asarray(times, dtype="datetime64[s]").astype(np.int64)
    hours = (t - int(hour0.timestamp())) / 3600.0
    return level + field_value + scale * np.interp(hours, np.arange(len(x)), x)


def _field(params: dict, xy: np.ndarray, extent) -> np.ndarray:
    lx, ly = extent
    u = xy[..., 0] / lx
    v = xy[..., 1] / ly
    bump = np.exp(-((u - params["cx"]) ** 2 + (v - params["cy"]) ** 2) / (2 * params["width"] ** 2))
    return params["amp"] * (params["gx"] * u + params["gy"] * v + params["bump"] * bump)


def place_sensors(n: int, extent: Sequence[float], min_spacing: float,
                  rng: np.random.Generator, max_tries: int = 200_000) -> np.ndarray:
    """Uniform positions in the extent with pairwise spacing >= ``min_spacing``."""
    lx, ly = extent
    # Disc packing bound: more points than this cannot keep the spacing.
    capacity = (lx + min_spacing) * (ly + min_spacing) / (math.sqrt(3) / 2 * min_spacing ** 2)
    if n > capacity:
        raise ValueError(f"cannot place {n} sensors {min_spacing} m apart in {lx}x{ly} m")
    pts: list[np.ndarray] = []
    tries = 0
    while len(pts) < n:
        tries += 1
        if tries > max_tries:
            raise ValueError(f"could not place {n} sensors {min_spacing} m apart")
        p = rng.uniform((0.0, 0.0), (lx, ly))
        if all(np.hypot(*(p - q)) >= min_spacing for q in pts):
            pts.append(p)
    return np.array(pts)


def _arx_latent(theta, u: np.ndarray, noise: np.ndarray) -> np.ndarray:
    a1, a2, b0, b1 = theta
    x = np.zeros(len(u))
    for t in range(2, len(u)):
        x[t] = a1 * x[t - 1] + a2 * x[t - 2] + b0 * u[t] + b1 * u[t - 1] + noise[t]
    return x


def generate(spec: SynthSpec, out_dir: str | Path | None = None) -> SynthOutput:
    """Draw a dataset; with ``out_dir`` also write network, readings and truth files."""
    bad = spec.violations()
    if bad:
        raise ValueError("; ".join(bad))
    root = np.random.SeedSequence(spec.seed)
    place_ss, field_ss, series_ss = root.spawn(3)
    positions = place_sensors(spec.n_sensors, spec.extent, spec.min_spacing,
                              np.random.default_rng(place_ss))
    frame = LocalFrame(*spec.origin)
    lat, lon = unproject(frame, positions[:, 0], positions[:, 1])
    sensors = [SensorMeta(f"S{i:03d}", float(lat[i]), float(lon[i]), 8.5)
               for i in range(spec.n_sensors)]

    frng = np.random.default_rng(field_ss)
    field_params = {}
    for kind in spec.stressors:
        g = frng.uniform(-1, 1, 2)
        field_params[kind.value] = {
            "amp": STRESSOR_SCALES[kind][2], "gx": float(g[0]), "gy": float(g[1]),
            "bump": float(frng.uniform(0.5, 1.5)), "cx": float(frng.uniform(0.2, 0.8)),
            "cy": float(frng.uniform(0.2, 0.8)), "width": float(frng.uniform(0.15, 0.35)),
        }

    hour0 = spec.start - timedelta(hours=BURN_IN_HOURS)
    n_hours = BURN_IN_HOURS + 24 * spec.days + 2
    hour_times = (np.datetime64(hour0.replace(tzinfo=None), "s")
                  + np.arange(n_hours) * np.timedelta64(3600, "s"))
    hod = local_slots(hour_times, 60, spec.timezone)
    t_start = int(spec.start.timestamp())
    t_end = t_start + 86400 * spec.days

    latent, field_values, outliers, readings = {}, {}, [], []
    n_planned = n_dropped = 0
    streams = series_ss.spawn(len(sensors) * len(spec.stressors))
    for si, sensor in enumerate(sensors):
        for ki, kind in enumerate(spec.stressors):
            rng = np.random.default_rng(streams[si * len(spec.stressors) + ki])
            key = (sensor.sensor_id, kind.value)
            u = diurnal_profile(kind)[hod]
            latent[key] = _arx_latent(spec.theta, u, rng.normal(0, spec.noise_std, n_hours))
            field_values[key] = float(_field(field_params[kind.value], positions[si], spec.extent))
            lo, hi = spec.cadences[kind]
            cadence = 60 * int(rng.integers(lo, hi + 1))
            phase = int(rng.integers(0, cadence))
            ts = np.arange(t_start + phase, t_end, cadence, dtype=np.int64)
            n_planned += len(ts)
            keep = rng.random(len(ts)) >= spec.dropout
            n_dropped += int((~keep).sum())
            truth = _truth_values(kind, hour0, latent[key], field_values[key],
                                  ts.astype("datetime64[s]"))
            spikes = rng.random(len(ts)) < spec.outlier_rate
            sigma = float(np.std(truth)) or 1.0
            signs = rng.choice([-1.0, 1.0], len(ts))
            values = truth + spikes * signs * spec.outlier_magnitude * sigma
            unit = DEFAULT_UNITS[kind]
            for t, v, s in zip(ts[keep], values[keep], spikes[keep]):
                when = datetime.fromtimestamp(int(t), tz=timezone.utc)
                readings.append(RawReading(sensor.sensor_id, kind, when, float(v), kind.value, unit))
                if s:
                    outliers.append((sensor.sensor_id, kind.value, when))

    truth = GroundTruth(spec, sensors, positions, hour0, latent, field_values,
                        field_params, outliers, n_planned, n_dropped)
    paths = [None, None, None]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "network.csv", out / "readings.csv", out / "truth.json"]
        write_network(sensors, paths[0])
        write_readings(readings, paths[1])
        paths[2].write_text(json.dumps(truth.to_json()), encoding="utf-8")
    return SynthOutput(*paths, truth=truth, readings=readings)

