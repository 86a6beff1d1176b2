"""Local planar projection and WKT encoding.

Coordinates are written in ``lon lat`` axis order. Numbers use the shortest
decimal string that parses back to the same double, with integral values
written without a fractional part (``19`` rather than ``19.0``).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .model import AnalyticalRecord

if TYPE_CHECKING:
    from .forecast import ForecastResult
    from .mapgen import ValueGrid

EARTH_RADIUS = 6_371_000.0
_DEG = math.pi / 180.0


@dataclass(frozen=True)
class LocalFrame:
    """Equirectangular tangent frame centred on a reference point."""

    lat0: float
    lon0: float
    radius: float = EARTH_RADIUS

    def __post_init__(self):
        if not abs(self.lat0) < 85.0:
            raise ValueError(f"reference latitude {self.lat0} out of range")


def project(frame: LocalFrame, lat, lon):
    """Map WGS84 degrees to local meters ``(x east, y north)``."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if np.any(~(np.abs(lat) < 85.0)):
        raise ValueError("latitude must satisfy |lat| < 85 degrees")
    x = frame.radius * (lon - frame.lon0) * _DEG * math.cos(frame.lat0 * _DEG)
    y = frame.radius * (lat - frame.lat0) * _DEG
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def unproject(frame: LocalFrame, x, y):
    """Inverse of :func:`project`; returns ``(lat, lon)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lat = frame.lat0 + y / (frame.radius * _DEG)
    lon = frame.lon0 + x / (frame.radius * _DEG * math.cos(frame.lat0 * _DEG))
    if lat.ndim == 0:
        return float(lat), float(lon)
    return lat, lon


def fmt(value: float) -> str:
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"non-finite coordinate {value!r}")
    if v == 0.0:
        return "0"
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def wkt_point(lat: float, lon: float, z: float) -> str:
    return f"POINT Z ({fmt(lon)} {fmt(lat)} {fmt(z)})"


def _coords(xs: Iterable[float], ys: Iterable[float]) -> str:
    return ", ".join(f"{fmt(x)} {fmt(y)}" for x, y in zip(xs, ys))


def wkt_linestring(xs: Sequence[float], ys: Sequence[float]) -> str:
    return f"LINESTRING ({_coords(xs, ys)})"


def wkt_multilinestring(lines: Sequence[tuple[Sequence[float], Sequence[float]]]) -> str:
    body = ", ".join(f"({_coords(xs, ys)})" for xs, ys in lines)
    return f"MULTILINESTRING ({body})"


def _epoch(dt: datetime) -> float:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def wkt_forecast(result: "ForecastResult") -> list[AnalyticalRecord]:
    """Encode a forecast as one mean LINESTRING plus a MULTILINESTRING
    (lower, upper) per confidence level.

    The x coordinate is epoch seconds of each forecast step.
    """
    t0 = _epoch(result.start)
    times = [t0 + 60.0 * result.step_minutes * k for k in range(len(result.mean))]
    ref = {"sensor_id": result.sensor_id, "step_minutes": result.step_minutes,
           "horizon": len(result.mean)}
    common = {"n_trajectories": result.n_trajectories}
    records = [
        AnalyticalRecord(
            kind="forecast",
            stressor=result.stressor,
            produced_at=result.start,
            wkt=wkt_linestring(times, result.mean),
            reference=ref,
            metadata=dict(common),
        )
    ]
    for level in sorted(result.lower):
        wkt = wkt_multilinestring(
            [(times, result.lower[level]), (times, result.upper[level])]
        )
        records.append(
            AnalyticalRecord(
                kind="band",
                stressor=result.stressor,
                produced_at=result.start,
                wkt=wkt,
                reference=ref,
                metadata={**common, "confidence_level": level},
            )
        )
    return records


def wkt_surface(grid: "ValueGrid", frame: LocalFrame | None = None,
                surface: str = "value") -> str:
    """Triangulated POLYHEDRALSURFACE Z over the raster.

    Each cell (i, j)-(i+1, j+1) is split along its (i, j)-(i+1, j+1)
    diagonal. Vertex strings are formatted once per raster point so that
    shared vertices of adjacent triangles are bit-identical.
    """
    from .mapgen import raster_positions

    if surface not in ("value", "reliability"):
        raise ValueError("surface must be 'value' or 'reliability'")
    z = grid.values if surface == "value" else grid.reliability
    if frame is None:
        frame = grid_frame(grid.spec)
    xy = raster_positions(grid.spec)
    lat, lon = unproject(frame, xy[..., 0], xy[..., 1])
    n1, n2 = z.shape
    verts = [[f"{fmt(lon[i, j])} {fmt(lat[i, j])} {fmt(z[i, j])}" for j in range(n2)]
             for i in range(n1)]
    polys = []
    for i in range(n1 - 1):
        for j in range(n2 - 1):
            a, b = verts[i][j], verts[i + 1][j]
            c, d = verts[i + 1][j + 1], verts[i][j + 1]
            polys.append(f"(({a}, {b}, {c}, {a}))")
            polys.append(f"(({a}, {c}, {d}, {a}))")
    return f"POLYHEDRALSURFACE Z ({', '.join(polys)})"


def grid_frame(spec) -> LocalFrame:
    return LocalFrame(spec.origin_lat, spec.origin_lon)


# --- parsing -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)|(?P<word>[A-Za-z]+)|(?P<punct>[(),]))"
)


class WKTError(ValueError):
    pass


def _tokenize(text: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise WKTError(f"unexpected character at {pos}")
        kind = m.lastgroup
        spaced = m.start(kind) > pos
        out.append((kind, m.group(kind), spaced))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None, False)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None:
            raise WKTError("unexpected end of text")
        if kind and tok[0] != kind or value and tok[1] != value:
            raise WKTError(f"expected {value or kind}, got {tok[1]!r}")
        self.i += 1
        return tok[1]

    def point(self, dim):
        vals = []
        while self.peek()[0] == "num":
            if vals and not self.peek()[2]:
                raise WKTError("coordinates must be separated by whitespace")
            vals.append(float(self.take("num")))
        if len(vals) != dim:
            raise WKTError(f"expected {dim} coordinates, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise WKTError("non-finite coordinate")
        return tuple(vals)

    def point_list(self, dim):
        self.take("punct", "(")
        pts = [self.point(dim)]
        while self.peek()[1] == ",":
            self.take()
            pts.append(self.point(dim))
        self.take("punct", ")")
        return pts

    def nested(self, item):
        self.take("punct", "(")
        out = [item()]
        while self.peek()[1] == ",":
            self.take()
            out.append(item())
        self.take("punct", ")")
        return out


def parse_wkt(text: str):
    """Parse the supported WKT subset into ``(geometry type, coordinates)``.

    Supported: ``POINT Z``, ``LINESTRING``, ``MULTILINESTRING`` and
    ``POLYHEDRALSURFACE Z``. Raises :class:`WKTError` on malformed input.
    """
    p = _Parser(_tokenize(text))
    kw = p.take("word").upper()
    if kw == "POINT":
        if p.take("word").upper() != "Z":
            raise WKTError("POINT must be POINT Z")
        (coords,) = p.point_list(3)
        geom = ("POINT Z", coords)
    elif kw == "LINESTRING":
        pts = p.point_list(2)
        if len(pts) < 2:
            raise WKTError("LINESTRING needs at least 2 points")
        geom = ("LINESTRING", pts)
    elif kw == "MULTILINESTRING":
        lines = p.nested(lambda: p.point_list(2))
        if any(len(line) < 2 for line in lines):
            raise WKTError("member LINESTRING needs at least 2 points")
        geom = ("MULTILINESTRING", lines)
    elif kw == "POLYHEDRALSURFACE":
        if p.take("word").upper() != "Z":
            raise WKTError("POLYHEDRALSURFACE must be POLYHEDRALSURFACE Z")
        polys = p.nested(lambda: p.nested(lambda: p.point_list(3)))
        for poly in polys:
            for ring in poly:
                if len(ring) < 4 or ring[0] != ring[-1]:
                    raise WKTError("polygon rings must be closed with >= 4 points")
        geom = ("POLYHEDRALSURFACE Z", polys)
    else:
        raise WKTError(f"unsupported geometry type {kw}")
    if p.peek()[0] is not None:
        raise WKTError("trailing tokens")
    return geom


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_P2 = rf"{_NUM}\s+{_NUM}"
_P3 = rf"{_NUM}\s+{_NUM}\s+{_NUM}"


def _seq(item: str) -> str:
    return rf"\(\s*{item}(?:\s*,\s*{item})*\s*\)"


_POLY = _seq(_seq(_P3))
_GRAMMAR = re.compile(
    rf"\s*(?:POINT\s+Z\s*\(\s*{_P3}\s*\)"
    rf"|LINESTRING\s*{_seq(_P2)}"
    rf"|MULTILINESTRING\s*{_seq(_seq(_P2))}"
    rf"|POLYHEDRALSURFACE\s+Z\s*{_seq(_POLY)})\s*",
    re.IGNORECASE,
)
_INNER = re.compile(r"\(([^()]*)\)")


def validate_wkt(text: str) -> bool:
    """Grammar check equivalent to :func:`parse_wkt` succeeding, but fast
    enough for large surfaces."""
    if not _GRAMMAR.fullmatch(text):
        return False
    head = text.lstrip()[:4].upper()
    for body in _INNER.findall(text):
        pts = body.split(",")
        if head == "POLY":
            if len(pts) < 4 or [float(v) for v in pts[0].split()] != [float(v) for v in pts[-1].split()]:
                return False
        elif head != "POIN" and len(pts) < 2:
            return False
    return all(math.isfinite(float(v)) for v in re.findall(_NUM, text.split("(", 1)[1]))
