"""Command-line entry point: ``sensorcast <subcommand> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .geo import grid_frame
from .ingest import format_timestamp, load_network, load_readings, parse_timestamp, query_records
from .model import AIR_QUALITY, PipelineConfig, StressorKind, load_config, validate_config
from .synth import SynthSpec, generate


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    problems = validate_config(cfg)
    if problems:
        raise SystemExit("invalid configuration: " + "; ".join(problems))
    return cfg


def cmd_run(args) -> int:
    cfg = _config(args)
    report = pipeline.run_batch(cfg, args.network, args.readings, args.store)
    print(report.summary())
    return 0 if report.count("failed") == 0 else 2


def _prepared(cfg, args):
    batch = load_readings(args.readings)
    if batch.interval is None:
        raise SystemExit("no readings")
    span = pipeline.batch_span(batch)
    out = {}
    for key in batch.keys():
        if not StressorKind.parse(key[1]).is_air_quality:
            continue
        try:
            out[key] = pipeline.prepare_series(batch.series[key], cfg, span)
        except ValueError as exc:
            logging.warning("%s/%s skipped: %s", key[0], key[1], exc)
    return out


def cmd_validate_forecast(args) -> int:
    cfg = _config(args)
    data: dict[str, list] = {}
    for (_, stressor), prep in sorted(_prepared(cfg, args).items()):
        if not prep.degenerate:
            data.setdefault(stressor, []).append(prep.smoothed)
    rows = pipeline.validate_forecasting(cfg, data, args.split)
    print(pipeline.format_rmse_table(rows))
    return 0


def cmd_validate_maps(args) -> int:
    cfg = _config(args)
    sensors = {s.sensor_id: s for s in load_network(args.network)}
    preps = _prepared(cfg, args)
    spec = cfg.grid or pipeline.auto_grid(list(sensors.values()), cfg.grid_counts)
    frame = grid_frame(spec)
    step = np.timedelta64(60 * cfg.step_minutes, "s")
    data: dict[str, list] = {}
    by_stressor: dict[str, list] = {}
    for (sid, stressor), prep in preps.items():
        if sid in sensors:
            by_stressor.setdefault(stressor, []).append(prep)
    for stressor, group in sorted(by_stressor.items()):
        hours = []
        for slot in group[0].standardized.times():
            medians = pipeline.slot_medians(group, slot, step)
            hours.append(pipeline.sensor_points(sensors, medians, frame))
        data[stressor] = hours
    rmse = pipeline.validate_maps(cfg, data, args.methods)
    print("stressor,method,loocv_rmse")
    for (stressor, method), v in rmse.items():
        print(f"{stressor},{method},{v:.6g}")
    return 0


def cmd_synth(args) -> int:
    kinds = tuple(StressorKind(s) for s in args.stressors) if args.stressors else AIR_QUALITY
    spec = SynthSpec(n_sensors=args.sensors, days=args.days, stressors=kinds,
                     dropout=args.dropout, outlier_rate=args.outlier_rate, seed=args.seed)
    out = generate(spec, args.out)
    print(f"wrote {out.network_path}, {out.readings_path} ({len(out.readings)} readings), "
          f"{out.truth_path}")
    return 0


def cmd_query(args) -> int:
    lo = parse_timestamp(args.start) if args.start else None
    hi = parse_timestamp(args.end) if args.end else None
    recs = query_records(args.store, args.kind, args.stressor,
                         (lo, hi) if (lo or hi) else None)
    for r in recs:
        row = {"kind": r.kind, "stressor": r.stressor,
               "produced_at": format_timestamp(r.produced_at),
               "reference": dict(r.reference), "metadata": dict(r.metadata)}
        if args.wkt:
            row["wkt"] = r.wkt
        print(json.dumps(row, sort_keys=True))
    return 0


def cmd_export_plot(args) -> int:
    n = pipeline.export_plot(args.store, args.out, args.stressor, args.sensor)
    print(f"wrote {n} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sensorcast", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the batch and append records to the store")
    r.add_argument("--config", type=Path)
    r.add_argument("--network", type=Path, required=True)
    r.add_argument("--readings", type=Path, required=True)
    r.add_argument("--store", type=Path, required=True)
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    vf = sub.add_parser("validate-forecast", help="train/test RMSE of the ARX models")
    vf.add_argument("--config", type=Path)
    vf.add_argument("--readings", type=Path, required=True)
    vf.add_argument("--split", type=float, default=2 / 3)
    vf.set_defaults(func=cmd_validate_forecast)

    vm = sub.add_parser("validate-maps", help="leave-one-out RMSE of the interpolators")
    vm.add_argument("--config", type=Path)
    vm.add_argument("--network", type=Path, required=True)
    vm.add_argument("--readings", type=Path, required=True)
    vm.add_argument("--methods", nargs="+", default=["natural", "idw"],
                    choices=["nearest", "natural", "linear", "idw"])
    vm.set_defaults(func=cmd_validate_maps)

    s = sub.add_parser("synth", help="generate a synthetic network and readings")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--sensors", type=int, default=10)
    s.add_argument("--days", type=int, default=35)
    s.add_argument("--stressors", nargs="+", choices=[k.value for k in AIR_QUALITY])
    s.add_argument("--dropout", type=float, default=0.0)
    s.add_argument("--outlier-rate", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    q = sub.add_parser("query", help="print stored records as JSON lines")
    q.add_argument("--store", type=Path, required=True)
    q.add_argument("--kind")
    q.add_argument("--stressor")
    q.add_argument("--start", help="inclusive, ISO-8601 UTC")
    q.add_argument("--end", help="exclusive, ISO-8601 UTC")
    q.add_argument("--wkt", action="store_true", help="include the geometry")
    q.set_defaults(func=cmd_query)

    e = sub.add_parser("export-plot", help="write forecasts and bands as CSV")
    e.add_argument("--store", type=Path, required=True)
    e.add_argument("--out", type=Path, required=True)
    e.add_argument("--stressor")
    e.add_argument("--sensor")
    e.set_defaults(func=cmd_export_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
