import csv
import dataclasses
from datetime import datetime, timezone

import numpy as np
import pytest

from conftest import THETA
from sensorcast.geo import LocalFrame, validate_wkt
from sensorcast.ingest import IngestError, iter_records, load_network, query_records
from sensorcast.mapgen import ScatteredPoint
from sensorcast.model import MapGridSpec, PipelineConfig
from sensorcast.pipeline import (
    auto_grid,
    export_plot,
    format_rmse_table,
    loocv_rmse,
    run_batch,
    validate_forecasting,
    validate_maps,
)
from sensorcast.preprocess import RegularSeries, TypicalProfile, local_slots

CFG = PipelineConfig(n_trajectories=200)


@pytest.fixture(scope="module")
def first_run(synth_dir, tmp_path_factory):
    store = tmp_path_factory.mktemp("run") / "store.jsonl"
    report = run_batch(CFG, synth_dir / "network.csv", synth_dir / "readings.csv", store)
    return report, store


def test_all_pairs_ok(first_run):
    report, store = first_run
    assert len(report.pairs) == 20 and report.count("ok") == 20
    recs = list(iter_records(store))
    kinds = {k: sum(r.kind == k for r in recs) for k in ("forecast", "band", "model",
                                                         "value_map", "reliability_map")}
    assert kinds["forecast"] == 20 and kinds["band"] == 60 and kinds["model"] == 20
    assert kinds["value_map"] == kinds["reliability_map"] == 2 * CFG.map_slots
    assert report.records_written == len(recs)
    assert all(validate_wkt(r.wkt) for r in recs)


def test_hourly_maps_queryable(first_run):
    _, store = first_run
    maps = query_records(store, "value_map", "temperature")
    times = [m.produced_at for m in maps]
    assert len(times) == 24 and all((b - a).total_seconds() == 3600 for a, b in zip(times, times[1:]))
    assert maps[0].metadata["method"] == "idw"


def test_forecast_in_original_units(first_run):
    _, store = first_run
    fc = [r for r in query_records(store, "forecast", "temperature")
          if r.reference["sensor_id"] == "S000"][0]
    from sensorcast.geo import parse_wkt
    _, line = parse_wkt(fc.wkt)
    vals = np.array([v for _, v in line])
    assert 10 < vals.mean() < 30  # original units, not standardized


def test_rerun_is_byte_identical(first_run, synth_dir, tmp_path):
    _, store = first_run
    store2 = tmp_path / "again.jsonl"
    run_batch(CFG, synth_dir / "network.csv", synth_dir / "readings.csv", store2)
    assert [r.wkt for r in iter_records(store)] == [r.wkt for r in iter_records(store2)]


def test_parallel_workers_match_serial(first_run, synth_dir, tmp_path):
    _, store = first_run
    store2 = tmp_path / "par.jsonl"
    run_batch(dataclasses.replace(CFG, workers=4), synth_dir / "network.csv",
              synth_dir / "readings.csv", store2)
    assert store.read_bytes() == store2.read_bytes()


def test_empty_readings(tmp_path, synth_dir):
    p = tmp_path / "r.csv"
    p.write_text("sensor_id,stressor,timestamp,value,unit\n")
    report = run_batch(CFG, synth_dir / "network.csv", p, tmp_path / "s.jsonl")
    assert report.pairs == {} and report.records_written == 0


def test_unreadable_input_fails_before_writing(tmp_path, synth_dir):
    p = tmp_path / "r.csv"
    p.write_text("sensor_id,stressor,timestamp,value,unit\nS000,temperature,yesterday,1,degC\n")
    with pytest.raises(IngestError):
        run_batch(CFG, synth_dir / "network.csv", p, tmp_path / "s.jsonl")
    assert not (tmp_path / "s.jsonl").exists()
    with pytest.raises(ValueError, match="invalid configuration"):
        run_batch(dataclasses.replace(CFG, step_minutes=0), synth_dir / "network.csv",
                  synth_dir / "readings.csv", tmp_path / "s.jsonl")


def _rewrite(src, dst, fn):
    with open(src) as fh:
        rows = list(csv.reader(fh))
    out = [rows[0]] + [r for r in (fn(r) for r in rows[1:]) if r is not None]
    with open(dst, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(out)


def _pair_records(store, sid, stressor):
    return [r.wkt for r in iter_records(store)
            if r.reference.get("sensor_id") == sid and r.stressor == stressor]


def test_constant_sensor_degraded(first_run, synth_dir, tmp_path):
    _, store = first_run
    def const(r):
        if r[0] == "S003" and r[1] == "carbon_monoxide":
            r[3] = "0.5"
        return r
    _rewrite(synth_dir / "readings.csv", tmp_path / "r.csv", const)
    store2 = tmp_path / "s.jsonl"
    report = run_batch(CFG, synth_dir / "network.csv", tmp_path / "r.csv", store2)
    assert report.pairs[("S003", "carbon_monoxide")].status == "degraded"
    assert report.count("ok") == 19
    assert _pair_records(store2, "S003", "carbon_monoxide") == []
    assert _pair_records(store2, "S004", "carbon_monoxide") == _pair_records(store, "S004", "carbon_monoxide")


def test_failure_isolation(first_run, synth_dir, tmp_path):
    _, store = first_run
    # keep only a handful of S001 temperature rows: too short to model
    seen = {"n": 0}
    def starve(r):
        if r[0] == "S001" and r[1] == "temperature":
            seen["n"] += 1
            return r if seen["n"] <= 5 else None
        return r
    _rewrite(synth_dir / "readings.csv", tmp_path / "r.csv", starve)
    store2 = tmp_path / "s.jsonl"
    report = run_batch(CFG, synth_dir / "network.csv", tmp_path / "r.csv", store2)
    st = report.pairs[("S001", "temperature")]
    assert st.status == "failed" and st.reason
    for sid in ("S000", "S002", "S009"):
        for k in ("temperature", "carbon_monoxide"):
            assert _pair_records(store2, sid, k) == _pair_records(store, sid, k)


def test_non_air_quality_pairs_reported(synth_dir, tmp_path):
    _rewrite(synth_dir / "readings.csv", tmp_path / "r.csv", lambda r: r)
    with open(tmp_path / "r.csv", "a") as fh:
        fh.write("S000,noise_level,2016-05-10T00:00:00Z,55,dB\n")
    report = run_batch(CFG, synth_dir / "network.csv", tmp_path / "r.csv", tmp_path / "s.jsonl")
    assert report.pairs[("S000", "noise_level")].status == "failed"
    assert len(report.pairs) == 21


def test_unknown_sensor_fails_only_itself(synth_dir, tmp_path):
    def rename(r):
        if r[0] == "S002":
            r[0] = "GHOST"
        return r
    _rewrite(synth_dir / "readings.csv", tmp_path / "r.csv", rename)
    report = run_batch(CFG, synth_dir / "network.csv", tmp_path / "r.csv", tmp_path / "s.jsonl")
    assert report.pairs[("GHOST", "temperature")].status == "failed"
    assert report.count("ok") == 18


def test_export_plot(first_run, tmp_path):
    _, store = first_run
    n = export_plot(store, tmp_path / "p.csv", "temperature", "S000")
    rows = list(csv.DictReader(open(tmp_path / "p.csv")))
    assert n == len(rows) == 24 * 7
    assert {r["series"] for r in rows} == {"mean", "lower_0.9", "upper_0.9", "lower_0.95",
                                           "upper_0.95", "lower_0.98", "upper_0.98"}


def test_auto_grid_covers_sensors(synth_dir):
    sensors = load_network(synth_dir / "network.csv")
    spec = auto_grid(sensors)
    frame = LocalFrame(spec.origin_lat, spec.origin_lon)
    from sensorcast.geo import project
    x, y = project(frame, [s.latitude for s in sensors], [s.longitude for s in sensors])
    assert np.all(x > 0) and np.all(y > 0)
    assert np.all(y < spec.lengths[0]) and np.all(x < spec.lengths[1])


# --- validation harnesses -----------------------------------------------------

def _noiseless_series(days=30):
    n = 24 * days
    prof = np.sin(2 * np.pi * np.arange(24) / 24) + 0.3 * np.cos(6 * np.pi * np.arange(24) / 24)
    start = datetime(2016, 5, 1, tzinfo=timezone.utc)
    s0 = RegularSeries(start, 60, np.zeros(n))
    u = prof[local_slots(s0.times(), 60, "UTC")]
    x = np.zeros(n)
    x[:2] = [1.0, -0.5]
    a1, a2, b0, b1 = THETA
    for t in range(2, n):
        x[t] = a1 * x[t - 1] + a2 * x[t - 2] + b0 * u[t] + b1 * u[t - 1]
    return RegularSeries(start, 60, x), TypicalProfile(60, prof, 30, start)


def test_validate_forecasting_noiseless():
    cfg = PipelineConfig(timezone="UTC")
    rows = validate_forecasting(cfg, {"temperature": [_noiseless_series()]})
    est, val = rows["temperature"]
    assert est < 1e-8 and val < 1e-8


def test_validate_forecasting_profile_from_training_only():
    cfg = PipelineConfig(timezone="UTC", typical_window_days=5)
    series, _ = _noiseless_series()
    rng = np.random.default_rng(0)
    noisy = RegularSeries(series.start, 60, series.values + rng.normal(0, 0.1, len(series)))
    est, val = validate_forecasting(cfg, {"x": [noisy]})["x"]
    assert 0.05 < est < 0.2 and val / est < 1.5


def test_validate_forecasting_errors():
    s = RegularSeries(datetime(2016, 5, 1, tzinfo=timezone.utc), 60, np.zeros(12))
    with pytest.raises(ValueError):
        validate_forecasting(PipelineConfig(), {"x": [s]})


def test_rmse_table_schema():
    table = format_rmse_table({"particulate_matter": (0.1299, 0.1816)})
    assert table.splitlines() == ["stressor,estimation,validation",
                                  "particulate_matter,0.1299,0.1816"]


def _hours(rng, n_sensors, n_hours, field, noise):
    xy = rng.uniform(0, 1000, (n_sensors, 2))
    return [[ScatteredPoint(f"s{i}", *xy[i], field(xy[i]) + rng.normal(0, noise))
             for i in range(n_sensors)] for _ in range(n_hours)]


def test_loocv_constant_field_zero():
    rng = np.random.default_rng(0)
    hours = _hours(rng, 8, 3, lambda p: 4.0, 0.0)
    for m in ("nearest", "natural", "linear", "idw"):
        assert loocv_rmse(hours, m) < 1e-12


def test_loocv_needs_three_sensors():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        loocv_rmse(_hours(rng, 2, 2, lambda p: 1.0, 0.0), "idw")


def test_validate_maps_keys_and_grid_frame():
    rng = np.random.default_rng(1)
    data = {"temperature": _hours(rng, 10, 4, lambda p: p[0] / 1000, 0.01)}
    out = validate_maps(PipelineConfig(), data, ["natural", "idw"])
    assert set(out) == {("temperature", "natural"), ("temperature", "idw")}
    grid = MapGridSpec(47.5, 19.0, 0.0, (1000.0, 1000.0), (20, 20))
    out2 = validate_maps(PipelineConfig(grid=grid), data, ["natural"])
    assert out2[("temperature", "natural")] > 0
