"""Reading sensor networks and measurements, and the analytical store.

Readings CSV
    Header ``sensor_id,stressor,timestamp,value,unit``; timestamps ISO-8601
    UTC (``2016-05-01T00:00:00Z``). Unknown stressor names are kept with
    kind ``other``.

Network CSV
    ``sensor_id,latitude,longitude,elevation,is_virtual``. The header line
    and ``#`` comment lines are optional; line numbers in errors are physical
    file lines.

Analytical store
    ``<store>`` holds one JSON object per line; ``<store>.idx`` records the
    committed byte length and record count. Readers ignore bytes beyond the
    committed length, so a batch that failed half-way is never visible.
"""

from __future__ import annotations

import contextlib
import csv
import fcntl
import json
import logging
import math
import os
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .geo import validate_wkt
from .model import DEFAULT_UNITS, AnalyticalRecord, RawReading, SensorMeta, StressorKind, utc

log = logging.getLogger(__name__)

READINGS_HEADER = ["sensor_id", "stressor", "timestamp", "value", "unit"]
NETWORK_HEADER = ["sensor_id", "latitude", "longitude", "elevation", "is_virtual"]


class IngestError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DuplicateSensorError(IngestError):
    pass


@dataclass
class MeasurementBatch:
    series: dict[tuple[str, str], list[RawReading]]
    interval: tuple[datetime, datetime] | None
    dropped_out_of_interval: int = 0
    duplicates_collapsed: int = 0

    def keys(self):
        return sorted(self.series)

    def __len__(self):
        return sum(len(v) for v in self.series.values())


def parse_timestamp(text: str) -> datetime:
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    return utc(datetime.fromisoformat(s))


def format_timestamp(dt: datetime) -> str:
    return utc(dt).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "y", "t"):
        return True
    if t in ("", "0", "false", "no", "n", "f"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_network(path: str | Path) -> list[SensorMeta]:
    sensors: list[SensorMeta] = []
    seen: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if row[0].strip() == "sensor_id":
                continue
            try:
                if len(row) < 3 or len(row) > 5:
                    raise ValueError(f"expected 3 to 5 fields, got {len(row)}")
                sid = row[0].strip()
                if not sid:
                    raise ValueError("empty sensor_id")
                lat, lon = float(row[1]), float(row[2])
                elev = float(row[3]) if len(row) > 3 and row[3].strip() else 0.0
                virtual = _parse_bool(row[4]) if len(row) > 4 else False
                if not (abs(lat) <= 90 and abs(lon) <= 180 and math.isfinite(elev)):
                    raise ValueError("coordinates out of range")
            except ValueError as exc:
                raise IngestError(str(exc), lineno) from None
            if sid in seen:
                raise DuplicateSensorError(
                    f"duplicate sensor_id {sid!r} (first on line {seen[sid]})", lineno
                )
            seen[sid] = lineno
            sensors.append(SensorMeta(sid, lat, lon, elev, virtual))
    return sensors


def write_network(sensors: Iterable[SensorMeta], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NETWORK_HEADER)
        for s in sensors:
            w.writerow([s.sensor_id, repr(s.latitude), repr(s.longitude),
                        repr(s.elevation), int(s.is_virtual)])


def load_readings(path: str | Path,
                  interval: tuple[datetime, datetime] | None = None) -> MeasurementBatch:
    """Load the readings CSV, keeping rows inside the half-open ``interval``."""
    lo = hi = None
    if interval is not None:
        lo, hi = utc(interval[0]), utc(interval[1])
    unique: set[tuple] = set()
    series: dict[tuple[str, str], list[RawReading]] = {}
    dropped = dupes = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return MeasurementBatch({}, interval)
        if [h.strip() for h in header] != READINGS_HEADER:
            raise IngestError(f"header must be {','.join(READINGS_HEADER)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != 5:
                    raise ValueError(f"expected 5 fields, got {len(row)}")
                sid, name, ts, val, unit = (c.strip() for c in row)
                if not sid:
                    raise ValueError("empty sensor_id")
                when = parse_timestamp(ts)
                value = float(val)
                if not math.isfinite(value):
                    raise ValueError("value must be finite")
            except ValueError as exc:
                raise IngestError(str(exc), lineno) from None
            if lo is not None and not (lo <= when < hi):
                dropped += 1
                continue
            kind = StressorKind.parse(name)
            label = kind.value if kind.is_air_quality else name
            key = (sid, label, when, value, unit)
            if key in unique:
                dupes += 1
                continue
            unique.add(key)
            series.setdefault((sid, label), []).append(
                RawReading(sid, kind, when, value, label, unit or DEFAULT_UNITS.get(kind, ""))
            )
    for readings in series.values():
        readings.sort(key=lambda r: (r.timestamp, r.value))
    if interval is None and series:
        first = min(r[0].timestamp for r in series.values())
        last = max(r[-1].timestamp for r in series.values())
        interval = (first, last)
    return MeasurementBatch(series, interval, dropped, dupes)


def write_readings(readings: Iterable[RawReading], path: str | Path) -> int:
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(READINGS_HEADER)
        for r in readings:
            w.writerow([r.sensor_id, r.label, format_timestamp(r.timestamp), repr(r.value), r.unit])
            n += 1
    return n


def write_batch(batch: MeasurementBatch, path: str | Path) -> int:
    return write_readings((r for k in batch.keys() for r in batch.series[k]), path)


# --- analytical store --------------------------------------------------------

def _index_path(store: Path) -> Path:
    return store.with_name(store.name + ".idx")


def _read_index(store: Path) -> dict:
    idx = _index_path(store)
    if not idx.exists():
        return {"committed_bytes": 0, "count": 0}
    return json.loads(idx.read_text(encoding="utf-8"))


@contextlib.contextmanager
def _locked(store: Path) -> Iterator[None]:
    lock = store.with_name(store.name + ".lock")
    with open(lock, "a") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def record_to_json(rec: AnalyticalRecord) -> str:
    return json.dumps(
        {
            "kind": rec.kind,
            "stressor": rec.stressor,
            "produced_at": format_timestamp(rec.produced_at),
            "reference": dict(rec.reference),
            "metadata": dict(rec.metadata),
            "wkt": rec.wkt,
        },
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )


def record_from_json(text: str) -> AnalyticalRecord:
    d = json.loads(text)
    return AnalyticalRecord(
        kind=d["kind"], stressor=d["stressor"], produced_at=parse_timestamp(d["produced_at"]),
        wkt=d["wkt"], reference=d.get("reference", {}), metadata=d.get("metadata", {}),
    )


def store_records(records: Sequence[AnalyticalRecord], store_path: str | Path) -> int:
    """Append ``records`` as one all-or-nothing batch; returns the count written."""
    records = list(records)
    for rec in records:
        if rec.kind not in AnalyticalRecord.KINDS:
            raise ValueError(f"unknown record kind {rec.kind!r}")
        if not validate_wkt(rec.wkt):
            raise ValueError(f"invalid WKT in {rec.kind} record for {rec.stressor}")
    if not records:
        return 0
    store = Path(store_path)
    store.parent.mkdir(parents=True, exist_ok=True)
    payload = "".join(record_to_json(r) + "\n" for r in records).encode("utf-8")
    with _locked(store):
        index = _read_index(store)
        committed = index["committed_bytes"]
        with open(store, "ab") as fh:
            fh.truncate(committed)  # drop leftovers of an interrupted batch
            fh.seek(committed)
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        new_index = {"committed_bytes": committed + len(payload),
                     "count": index["count"] + len(records)}
        tmp = _index_path(store).with_suffix(".idx.tmp")
        tmp.write_text(json.dumps(new_index), encoding="utf-8")
        os.replace(tmp, _index_path(store))
    return len(records)


def iter_records(store_path: str | Path) -> Iterator[AnalyticalRecord]:
    store = Path(store_path)
    if not store.exists():
        log.warning("analytical store %s does not exist", store)
        return
    committed = _read_index(store)["committed_bytes"]
    with open(store, "rb") as fh:
        data = fh.read(committed)
    for line in data.decode("utf-8").splitlines():
        if line:
            yield record_from_json(line)


def query_records(store_path: str | Path, kind: str | None = None,
                  stressor: str | None = None,
                  time_range: tuple[datetime | None, datetime | None] | None = None
                  ) -> list[AnalyticalRecord]:
    """Records matching every given filter, ordered by ``produced_at``.

    ``time_range`` is half-open ``[start, end)``; either end may be ``None``.
    """
    lo, hi = time_range if time_range is not None else (None, None)
    lo = utc(lo) if lo is not None else None
    hi = utc(hi) if hi is not None else None
    out = [
        r for r in iter_records(store_path)
        if (kind is None or r.kind == kind)
        and (stressor is None or r.stressor == stressor)
        and (lo is None or r.produced_at >= lo)
        and (hi is None or r.produced_at < hi)
    ]
    out.sort(key=lambda r: r.produced_at)
    return out
