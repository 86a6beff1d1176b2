"""Batch orchestration and validation harnesses."""

from __future__ import annotations

import csv
import logging
import math
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Mapping, Sequence

import numpy as np

from . import geo
from .forecast import ForecastResult, build_edf, monte_carlo_forecast
from .ingest import load_network, load_readings, query_records, store_records
from .mapgen import (
    ScatteredData,
    ScatteredPoint,
    generate_map,
    inject_corner_virtual_sensors,
)
from .model import (
    AnalyticalRecord,
    MapGridSpec,
    PipelineConfig,
    RawReading,
    SensorMeta,
    StressorKind,
    utc,
    validate_config,
)
from .preprocess import (
    PreprocessError,
    RegularSeries,
    TypicalProfile,
    discretize_values,
    hampel_filter,
    impute_missing,
    invert_scaling,
    local_slots,
    sinc_smooth,
    standardize,
    typical_profile,
)
from .timeseries import ArxModel, fit_arx, fit_rmse

log = logging.getLogger(__name__)


@dataclass
class PairStatus:
    sensor_id: str
    stressor: str
    status: str = "ok"
    reason: str = ""
    outliers: int = 0
    imputed: int = 0
    seconds: float = 0.0
    records: int = 0


@dataclass
class RunReport:
    pairs: dict[tuple[str, str], PairStatus] = field(default_factory=dict)
    records_written: int = 0
    maps_written: int = 0
    skipped_other: int = 0
    timings: dict[str, float] = field(default_factory=dict)

    def count(self, status: str) -> int:
        return sum(1 for p in self.pairs.values() if p.status == status)

    def summary(self) -> str:
        lines = [f"pairs: {len(self.pairs)} (ok {self.count('ok')}, degraded "
                 f"{self.count('degraded')}, failed {self.count('failed')})",
                 f"records written: {self.records_written} ({self.maps_written} maps)"]
        for key in sorted(self.pairs):
            p = self.pairs[key]
            if p.status != "ok":
                lines.append(f"  {p.sensor_id}/{p.stressor}: {p.status} - {p.reason}")
        return "\n".join(lines)


@dataclass
class PreparedSeries:
    """Output of the pre-processing chain for one (sensor, stressor) pair."""

    sensor_id: str
    stressor: str
    times: np.ndarray           # raw reading instants, datetime64[s]
    filtered: np.ndarray        # raw values after outlier replacement
    outliers: list[int]
    standardized: RegularSeries  # standardized, gaps imputed
    smoothed: RegularSeries
    imputed: list[int]
    profile: TypicalProfile | None
    degenerate: bool = False

    @property
    def scale_meta(self) -> tuple[float, float]:
        return self.standardized.scale_meta


def _readings_arrays(readings: Sequence[RawReading]):
    times = np.array([r.timestamp.replace(tzinfo=None) for r in readings], dtype="datetime64[s]")
    values = np.array([r.value for r in readings], dtype=float)
    return times, values


def prepare_series(readings: Sequence[RawReading], cfg: PipelineConfig,
                   interval: tuple[datetime, datetime]) -> PreparedSeries:
    """Outliers, discretization, standardization, imputation, smoothing and
    typical values, in that order."""
    if not readings:
        raise PreprocessError("no readings")
    sid, stressor = readings[0].sensor_id, readings[0].label
    times, values = _readings_arrays(readings)
    filtered, outliers = hampel_filter(values, cfg.hampel_window_half, cfg.hampel_k)
    series = discretize_values(times, filtered, cfg.step_minutes, interval, stressor)
    std = standardize(series)
    if std.degenerate:
        filled = std.__class__(std.start, std.step_minutes, np.zeros(len(std)),
                               stressor, std.scale_meta, True)
        return PreparedSeries(sid, stressor, times, filtered, outliers, filled, filled,
                              np.flatnonzero(~std.present).tolist(), None, True)
    filled, imputed = impute_missing(std, cfg.impute_order)
    smoothed = sinc_smooth(filled, cfg.low_cut, cfg.high_cut)
    profile = typical_profile(smoothed, cfg.typical_window_days, cfg.timezone)
    return PreparedSeries(sid, stressor, times, filtered, outliers, filled, smoothed,
                          imputed, profile)


def profile_input(profile: TypicalProfile, times, tz: str) -> np.ndarray:
    """Typical values at the local time-of-day of each instant."""
    return profile.slots[local_slots(times, profile.step_minutes, tz)]


def pair_seed(seed: int, sensor_id: str, stressor: str) -> int:
    return int(np.random.SeedSequence(
        [seed, zlib.crc32(f"{sensor_id}|{stressor}".encode())]
    ).generate_state(1)[0])


def forecast_pair(prep: PreparedSeries, cfg: PipelineConfig) -> tuple[ArxModel, ForecastResult]:
    """Fit ARX on the cleaned series and produce a Monte Carlo forecast in
    original units."""
    x = prep.smoothed
    times = x.times()
    u = profile_input(prep.profile, times, cfg.timezone)
    model = fit_arx(x.values, u, cfg.arx_p, cfg.arx_q)
    edf = build_edf(model.residuals, times[model.lag:], cfg.step_minutes, cfg.timezone,
                    cfg.min_bucket_count)
    step = np.timedelta64(60 * cfg.step_minutes, "s")
    end = times[-1] + step
    h, q = cfg.horizon_steps, cfg.arx_q
    future = end + np.arange(h) * step
    u_times = end + np.arange(-(q - 1), h) * step
    result = monte_carlo_forecast(
        model, x.values[len(x) - model.p:], profile_input(prep.profile, u_times, cfg.timezone),
        edf, h, cfg.n_trajectories, cfg.confidence_levels,
        pair_seed(cfg.seed, prep.sensor_id, prep.stressor),
        buckets=local_slots(future, cfg.step_minutes, cfg.timezone), u_offset=q - 1,
        start=utc(x.end), stressor=prep.stressor, sensor_id=prep.sensor_id,
    )
    meta = prep.scale_meta
    return model, result.transformed(lambda v: invert_scaling(v, meta))


def auto_grid(sensors: Sequence[SensorMeta], counts=(20, 20), margin: float = 0.05) -> MapGridSpec:
    """North-aligned grid covering all sensors with a relative margin."""
    lat = np.array([s.latitude for s in sensors])
    lon = np.array([s.longitude for s in sensors])
    frame = geo.LocalFrame(float(lat.min()), float(lon.min()))
    x, y = geo.project(frame, lat, lon)
    w, h = float(np.ptp(x)), float(np.ptp(y))
    pad = max(margin * max(w, h), 10.0)
    olat, olon = geo.unproject(frame, -pad, -pad)
    return MapGridSpec(float(olat), float(olon), 0.0, (h + 2 * pad, w + 2 * pad),
                       tuple(int(n) for n in counts))


def sensor_points(sensors: Mapping[str, SensorMeta], values: Mapping[str, float],
                  frame: geo.LocalFrame) -> list[ScatteredPoint]:
    pts = []
    for sid in sorted(values):
        meta = sensors[sid]
        x, y = geo.project(frame, meta.latitude, meta.longitude)
        pts.append(ScatteredPoint(sid, x, y, float(values[sid]), meta.is_virtual))
    return pts


def slot_medians(preps: Sequence[PreparedSeries], slot_start: np.datetime64,
                 step: np.timedelta64) -> dict[str, float]:
    """Median of each sensor's cleaned readings in one slot, falling back to
    the adjacent slots when the slot is empty."""
    from .mapgen import collapse_to_scalar

    out = {}
    for p in preps:
        lo = np.searchsorted(p.times, slot_start - step)
        a = np.searchsorted(p.times, slot_start)
        b = np.searchsorted(p.times, slot_start + step)
        hi = np.searchsorted(p.times, slot_start + 2 * step)
        z = collapse_to_scalar(p.filtered[a:b], True, (p.filtered[lo:a], p.filtered[b:hi]))
        if z is not None:
            out[p.sensor_id] = z
    return out


def _model_record(model: ArxModel, meta: SensorMeta, prep: PreparedSeries,
                  produced_at: datetime) -> AnalyticalRecord:
    return AnalyticalRecord(
        kind="model", stressor=prep.stressor, produced_at=produced_at,
        wkt=geo.wkt_point(meta.latitude, meta.longitude, meta.elevation),
        reference={"sensor_id": prep.sensor_id},
        metadata={"model": model.to_text(), "scale_mean": prep.scale_meta[0],
                  "scale_std": prep.scale_meta[1]},
    )


def _process_pair(key, readings, cfg, interval, sensors):
    sid, stressor = key
    st = PairStatus(sid, stressor)
    t0 = time.perf_counter()
    prep = records = None
    try:
        prep = prepare_series(readings, cfg, interval)
        st.outliers, st.imputed = len(prep.outliers), len(prep.imputed)
        if sid not in sensors:
            raise ValueError("sensor missing from network description")
        if prep.degenerate:
            st.status, st.reason = "degraded", "constant series; standardization degenerate"
            records = []
        else:
            model, result = forecast_pair(prep, cfg)
            records = [_model_record(model, sensors[sid], prep, result.start)]
            records += geo.wkt_forecast(result)
    except Exception as exc:  # a pair never aborts the batch
        st.status, st.reason = "failed", f"{type(exc).__name__}: {exc}"
        records = []
        if prep is not None and sid not in sensors:
            prep = None
    st.records = len(records)
    st.seconds = time.perf_counter() - t0
    return st, prep, records


def batch_span(batch) -> tuple[datetime, datetime]:
    """Half-open interval covering every reading of a loaded batch."""
    lo, hi = batch.interval
    return utc(lo), utc(hi) + timedelta(seconds=1)


def run_batch(cfg: PipelineConfig, network_path, readings_path, store_path,
              interval: tuple[datetime, datetime] | None = None) -> RunReport:
    """Run the full batch: ingest, per-pair forecasting, hourly maps, store."""
    problems = validate_config(cfg)
    if problems:
        raise ValueError("invalid configuration: " + "; ".join(problems))
    t_start = time.perf_counter()
    sensors = {s.sensor_id: s for s in load_network(network_path)}
    batch = load_readings(readings_path, interval)
    report = RunReport()
    report.timings["load"] = time.perf_counter() - t_start
    keys = []
    for key in batch.keys():
        if StressorKind.parse(key[1]).is_air_quality:
            keys.append(key)
        else:
            report.skipped_other += 1
            report.pairs[key] = PairStatus(key[0], key[1], "failed",
                                           "not an air-quality stressor")
    if not keys:
        return report
    span = batch_span(batch)

    t1 = time.perf_counter()
    jobs = [(k, batch.series[k], cfg, span, sensors) for k in keys]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(lambda a: _process_pair(*a), jobs))
    else:
        results = [_process_pair(*a) for a in jobs]
    report.timings["pairs"] = time.perf_counter() - t1

    records: list[AnalyticalRecord] = []
    by_stressor: dict[str, list[PreparedSeries]] = {}
    for st, prep, recs in results:
        report.pairs[(st.sensor_id, st.stressor)] = st
        records.extend(recs)
        if prep is not None:
            by_stressor.setdefault(prep.stressor, []).append(prep)

    t2 = time.perf_counter()
    map_records = []
    for stressor in sorted(by_stressor):
        map_records.extend(_map_records(by_stressor[stressor], stressor, cfg, sensors))
    report.timings["maps"] = time.perf_counter() - t2

    records.extend(map_records)
    report.records_written = store_records(records, store_path)
    report.maps_written = len(map_records)
    report.timings["total"] = time.perf_counter() - t_start
    return report


def _map_records(preps, stressor, cfg, sensors) -> list[AnalyticalRecord]:
    spec = cfg.grid or auto_grid(list(sensors.values()), cfg.grid_counts)
    frame = geo.grid_frame(spec)
    series = preps[0].standardized
    step = np.timedelta64(60 * cfg.step_minutes, "s")
    slots = series.times()[-cfg.map_slots:]
    c = cfg.reliability_constant(stressor)
    grid_ref = {"origin_lat": spec.origin_lat, "origin_lon": spec.origin_lon,
                "bearing": spec.bearing, "lengths": list(spec.lengths),
                "counts": list(spec.counts)}
    out = []
    for slot in slots:
        medians = slot_medians(preps, slot, step)
        if not medians:
            continue
        points = sensor_points(sensors, medians, frame)
        when = utc(slot.astype(datetime))
        try:
            grid = generate_map(points, spec, cfg.interp_method, c, cfg.idw_power,
                                stressor, when)
        except ValueError as exc:
            log.warning("map %s %s skipped: %s", stressor, when, exc)
            continue
        meta = {"method": cfg.interp_method, "reliability_c": c, "n_sensors": len(points)}
        ref = {"grid": grid_ref, "slot_minutes": cfg.step_minutes}
        out.append(AnalyticalRecord("value_map", stressor, when,
                                    geo.wkt_surface(grid, frame, "value"), ref, meta))
        out.append(AnalyticalRecord("reliability_map", stressor, when,
                                    geo.wkt_surface(grid, frame, "reliability"), ref, meta))
    return out


# --- validation harnesses ------------------------------------------------------

def validate_forecasting(cfg: PipelineConfig,
                         data: Mapping[str, Sequence[RegularSeries | tuple[RegularSeries, TypicalProfile]]],
                         split: float = 2 / 3) -> dict[str, tuple[float, float]]:
    """Chronological train/test RMSE of one-step ARX predictions.

    ``data`` maps a stressor to pre-processed (standardized, gap-free)
    series, optionally paired with their typical profile. Without a profile
    it is computed from the training part only. Per-stressor RMSEs pool
    squared errors over all series of that stressor.
    """
    if not 0 < split < 1:
        raise ValueError("split must lie in (0, 1)")
    per_day = 1440 // cfg.step_minutes
    out = {}
    for stressor, items in data.items():
        sq_est = sq_val = 0.0
        n_est = n_val = 0
        for item in items:
            series, prof = item if isinstance(item, tuple) else (item, None)
            n = len(series)
            n_train = int(math.floor(n * split))
            if n_train <= 2 * (cfg.arx_p + cfg.arx_q) or n - n_train < 1:
                raise ValueError(f"{stressor}: not enough data to split")
            if prof is None:
                train_days = n_train // per_day
                if train_days < 1:
                    raise ValueError(f"{stressor}: training part shorter than one day")
                train = RegularSeries(series.start, series.step_minutes,
                                      series.values[:n_train], series.stressor)
                prof = typical_profile(train, min(cfg.typical_window_days, train_days),
                                       cfg.timezone)
            u = profile_input(prof, series.times(), cfg.timezone)
            model = fit_arx(series.values[:n_train], u[:n_train], cfg.arx_p, cfg.arx_q)
            e = fit_rmse(model, series.values, u, 0, n_train)
            v = fit_rmse(model, series.values, u, n_train, n)
            k_est, k_val = n_train - model.lag, n - n_train
            sq_est += e * e * k_est
            sq_val += v * v * k_val
            n_est += k_est
            n_val += k_val
        if n_est == 0:
            raise ValueError(f"{stressor}: no series")
        out[stressor] = (math.sqrt(sq_est / n_est), math.sqrt(sq_val / n_val))
    return out


def format_rmse_table(rows: Mapping[str, tuple[float, float]]) -> str:
    lines = ["stressor,estimation,validation"]
    lines += [f"{s},{e:.4f},{v:.4f}" for s, (e, v) in rows.items()]
    return "\n".join(lines)


def loocv_rmse(hours: Sequence[Sequence[ScatteredPoint]], method: str,
               spec: MapGridSpec | None = None, power: float = 2.0) -> float:
    """Leave-one-out RMSE over all hours: each real sensor's value is
    predicted from a map built on all other points.

    Points must be in the local frame of ``spec``; without a spec the
    corners come from the points' bounding box plus a margin.
    """
    sq, n = 0.0, 0
    for points in hours:
        real = [i for i, p in enumerate(points) if not p.is_virtual]
        if len(real) < 3:
            continue
        grid = spec
        if grid is None:
            points, grid = _shift_to_bbox(points)
        for i in real:
            others = [p for j, p in enumerate(points) if j != i]
            q = (points[i].x, points[i].y)
            if method in ("natural", "linear"):
                others = inject_corner_virtual_sensors(others, grid)
            data = ScatteredData(others)
            if method == "idw":
                z = data.idw(q, power)
            elif method == "nearest":
                z = data.nearest(q)
            elif method == "linear":
                z = data.linear(q)
            elif method == "natural":
                z = data.natural(q)
            else:
                raise ValueError(f"unknown interpolation method {method!r}")
            if z is None:
                raise ValueError("held-out point outside the map grid")
            sq += (z - points[i].z) ** 2
            n += 1
    if n == 0:
        raise ValueError("LOOCV needs at least 3 sensors")
    return math.sqrt(sq / n)


def _shift_to_bbox(points: Sequence[ScatteredPoint], margin: float = 0.05):
    """Translate points so their padded bounding box starts at the origin
    and return a north-aligned grid spanning it."""
    from dataclasses import replace

    xy = np.array([[p.x, p.y] for p in points])
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    pad = max(margin * float(np.max(hi - lo)), 10.0)
    shifted = [replace(p, x=p.x - lo[0] + pad, y=p.y - lo[1] + pad) for p in points]
    w, h = hi - lo + 2 * pad
    return shifted, MapGridSpec(0.0, 0.0, 0.0, (float(h), float(w)), (2, 2))


def validate_maps(cfg: PipelineConfig,
                  data: Mapping[str, Sequence[Sequence[ScatteredPoint]]],
                  methods: Sequence[str] = ("natural", "idw")) -> dict[tuple[str, str], float]:
    """Per (stressor, method) LOOCV RMSE; ``data`` maps a stressor to one
    list of scattered points per hour."""
    return {
        (stressor, method): loocv_rmse(hours, method, cfg.grid, cfg.idw_power)
        for stressor, hours in data.items()
        for method in methods
    }


def export_plot(store_path, out_path, stressor: str | None = None,
                sensor_id: str | None = None) -> int:
    """Write forecasts and their bands as plot-ready CSV; returns row count."""
    forecasts = query_records(store_path, kind="forecast", stressor=stressor)
    bands = query_records(store_path, kind="band", stressor=stressor)
    rows = 0
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sensor_id", "stressor", "time", "series", "value"])
        for rec in forecasts:
            sid = rec.reference.get("sensor_id", "")
            if sensor_id is not None and sid != sensor_id:
                continue
            _, pts = geo.parse_wkt(rec.wkt)
            series = [("mean", pts)]
            for b in bands:
                if b.reference.get("sensor_id") == sid and b.produced_at == rec.produced_at \
                        and b.stressor == rec.stressor:
                    level = b.metadata["confidence_level"]
                    _, (lower, upper) = geo.parse_wkt(b.wkt)
                    series += [(f"lower_{level:g}", lower), (f"upper_{level:g}", upper)]
            for name, line in series:
                for t, v in line:
                    when = datetime.utcfromtimestamp(t).strftime("%Y-%m-%dT%H:%M:%SZ")
                    w.writerow([sid, rec.stressor, when, name, repr(v)])
                    rows += 1
    return rows
