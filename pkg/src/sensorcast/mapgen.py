"""Scattered-data interpolation onto rotated rasters, plus reliability.

All positions are planar meters in the map's local frame (see
:func:`sensorcast.geo.grid_frame`). Four interpolators are provided:

* ``nearest`` - value of the closest point (ties go to the lowest id)
* ``idw``     - inverse distance weighting, ``w = 1 / d**n``
* ``linear``  - barycentric interpolation on the Delaunay triangulation
* ``natural`` - Sibson natural-neighbour interpolation

``linear`` and ``natural`` are undefined outside the convex hull; map
generation injects corner virtual sensors for them first.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace
from datetime import datetime
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import Delaunay

from .model import MapGridSpec

ZERO_DISTANCE = 1e-9


class CollinearPointsError(ValueError):
    pass


@dataclass(frozen=True)
class ScatteredPoint:
    sensor_id: str
    x: float
    y: float
    z: float
    is_virtual: bool = False

    def __post_init__(self):
        if not all(np.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"{self.sensor_id}: position and value must be finite")


@dataclass(frozen=True)
class ValueGrid:
    spec: MapGridSpec
    values: np.ndarray
    reliability: np.ndarray
    stressor: str = ""
    time_slot: datetime | None = None
    method: str = ""


def raster_positions(spec: MapGridSpec) -> np.ndarray:
    """Local-frame coordinates ``(n1, n2, 2)`` of the raster points.

    The frame is centred on the origin corner, so point (0, 0) is at (0, 0).
    """
    b = np.deg2rad(spec.bearing)
    e1 = np.array([np.sin(b), np.cos(b)])
    e2 = np.array([np.cos(b), -np.sin(b)])
    (l1, l2), (n1, n2) = spec.lengths, spec.counts
    s1 = np.linspace(0.0, l1, n1)
    s2 = np.linspace(0.0, l2, n2)
    return s1[:, None, None] * e1 + s2[None, :, None] * e2


def corner_positions(spec: MapGridSpec) -> np.ndarray:
    xy = raster_positions(spec)
    return np.array([xy[0, 0], xy[-1, 0], xy[-1, -1], xy[0, -1]])


def collapse_to_scalar(values: Sequence[float], neighbour_fallback: bool = False,
                       neighbours: Iterable[Sequence[float]] = ()) -> float | None:
    """Median of one sensor's values in a slot.

    An empty slot falls back to the pooled values of the adjacent slots when
    ``neighbour_fallback`` is set; ``None`` means the sensor is skipped.
    """
    vals = np.asarray(values, dtype=float)
    if vals.size == 0 and neighbour_fallback:
        pooled = [v for nb in neighbours for v in nb]
        vals = np.asarray(pooled, dtype=float)
    if vals.size == 0:
        return None
    return float(np.median(vals))


def _circumcircle(a, b, c):
    ax, ay = a
    bx, by = b
    cx, cy = c
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    return np.array([ux, uy])


def _convex_area(pts: np.ndarray) -> float:
    if len(pts) < 3:
        return 0.0
    c = pts.mean(axis=0)
    order = np.argsort(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]))
    p = pts[order]
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


class ScatteredData:
    """Point set with lazily built triangulation, shared across queries."""

    def __init__(self, points: Sequence[ScatteredPoint]):
        if not points:
            raise ValueError("at least one scattered point is required")
        self.points = list(points)
        self.xy = np.array([[p.x, p.y] for p in points], dtype=float)
        self.z = np.array([p.z for p in points], dtype=float)
        self.ids = [p.sensor_id for p in points]
        span = np.ptp(self.xy, axis=0) if len(points) > 1 else np.zeros(2)
        self.scale = float(max(np.hypot(*span), 1.0))

    @cached_property
    def tri(self) -> Delaunay:
        if len(self.xy) < 3:
            raise CollinearPointsError("need at least 3 non-collinear points")
        centred = self.xy - self.xy.mean(axis=0)
        sv = np.linalg.svd(centred, compute_uv=False)
        if sv[1] <= 1e-9 * sv[0]:
            raise CollinearPointsError("scattered points are collinear")
        return Delaunay(self.xy)

    @cached_property
    def _circles(self):
        tri = self.tri
        cc = np.array([_circumcircle(*self.xy[s]) for s in tri.simplices])
        r2 = np.sum((self.xy[tri.simplices[:, 0]] - cc) ** 2, axis=1)
        return cc, r2

    @cached_property
    def _hull_edges(self) -> np.ndarray:
        return self.tri.convex_hull

    def _coincident(self, q) -> int | None:
        d = np.hypot(*(self.xy - q).T)
        i = int(np.argmin(d))
        return i if d[i] < ZERO_DISTANCE else None

    # -- interpolators -------------------------------------------------------

    def nearest(self, q) -> float:
        d2 = np.sum((self.xy - np.asarray(q, dtype=float)) ** 2, axis=1)
        ties = np.flatnonzero(d2 == d2.min())
        best = min(ties, key=lambda i: self.ids[i])
        return float(self.z[best])

    def idw(self, q, power: float = 2.0) -> float:
        if not power > 0:
            raise ValueError("IDW exponent must be > 0")
        d = np.hypot(*(self.xy - np.asarray(q, dtype=float)).T)
        i = int(np.argmin(d))
        if d[i] < ZERO_DISTANCE:
            return float(self.z[i])
        # Weights relative to the nearest point keep large exponents finite.
        w = np.exp(-power * (np.log(d) - np.log(d[i])))
        return float(w @ self.z / w.sum())

    def _on_hull_edge(self, q):
        tol = 1e-9 * self.scale
        for a, b in self._hull_edges:
            pa, pb = self.xy[a], self.xy[b]
            ab = pb - pa
            t = float(np.dot(q - pa, ab) / np.dot(ab, ab))
            if -1e-12 <= t <= 1 + 1e-12:
                foot = pa + t * ab
                if np.hypot(*(q - foot)) <= tol:
                    t = min(max(t, 0.0), 1.0)
                    return (1 - t) * self.z[a] + t * self.z[b]
        return None

    def linear(self, q) -> float | None:
        q = np.asarray(q, dtype=float)
        tri = self.tri
        i = self._coincident(q)
        if i is not None:
            return float(self.z[i])
        s = int(tri.find_simplex(q, tol=1e-9))
        if s == -1:
            return None
        T = tri.transform[s]
        b = T[:2] @ (q - T[2])
        bary = np.clip(np.array([b[0], b[1], 1.0 - b[0] - b[1]]), 0.0, None)
        bary /= bary.sum()
        return float(bary @ self.z[tri.simplices[s]])

    def sibson_weights(self, q) -> dict[int, float] | None:
        """Natural-neighbour coordinates of ``q`` as ``{point index: weight}``.

        The weight of P_i is the area that the Voronoi cell of ``q`` would
        take from P_i's cell if ``q`` were inserted, normalised to sum to one.
        The stolen region is convex; its vertices are the circumcentres of
        the triangles whose circumcircle contains ``q`` (old Voronoi vertices)
        and the circumcentres of the new triangles ``q``-P_i-P_j formed on the
        boundary of that cavity.
        """
        q = np.asarray(q, dtype=float)
        i = self._coincident(q)
        if i is not None:
            return {i: 1.0}
        tri = self.tri
        s = int(tri.find_simplex(q, tol=1e-9))
        if s == -1:
            return None
        cc, r2 = self._circles
        cavity = {s}
        stack = [s]
        while stack:
            t = stack.pop()
            for nb in tri.neighbors[t]:
                if nb != -1 and nb not in cavity and np.sum((q - cc[nb]) ** 2) < r2[nb]:
                    cavity.add(nb)
                    stack.append(nb)
        poly: dict[int, list[np.ndarray]] = defaultdict(list)
        for t in cavity:
            verts = tri.simplices[t]
            for k in range(3):
                poly[verts[k]].append(cc[t])
                nb = tri.neighbors[t][k]
                if nb == -1 or nb not in cavity:
                    a, b = verts[(k + 1) % 3], verts[(k + 2) % 3]
                    c = _circumcircle(q, self.xy[a], self.xy[b])
                    poly[a].append(c)
                    poly[b].append(c)
        areas = {v: _convex_area(np.array(pts)) for v, pts in poly.items()}
        total = sum(areas.values())
        if not np.isfinite(total) or total <= 0:
            return None
        return {v: a / total for v, a in areas.items() if a > 0}

    def natural(self, q) -> float | None:
        q = np.asarray(q, dtype=float)
        i = self._coincident(q)
        if i is not None:
            return float(self.z[i])
        if len(self.xy) >= 3:
            on_edge = self._on_hull_edge(q)
            if on_edge is not None:
                return float(on_edge)
        w = self.sibson_weights(q)
        if w is None:
            return None
        return float(sum(wt * self.z[v] for v, wt in w.items()))

    def reliability(self, q, c: float):
        """``max_i exp(-d_i^2 / (2c))`` over real (non-virtual) points."""
        real = np.array([not p.is_virtual for p in self.points])
        if not real.any():
            raise ValueError("reliability needs at least one real sensor")
        q = np.asarray(q, dtype=float)
        d2 = np.sum((q[..., None, :] - self.xy[real]) ** 2, axis=-1)
        # Floor at the smallest normal double so far points stay in (0, 1].
        return np.maximum(np.exp(-d2.min(axis=-1) / (2.0 * c)), np.finfo(float).tiny)


def interp_nearest(points: Sequence[ScatteredPoint], q) -> float:
    return ScatteredData(points).nearest(q)


def interp_idw(points: Sequence[ScatteredPoint], q, n: float = 2.0) -> float:
    return ScatteredData(points).idw(q, n)


def interp_linear(points: Sequence[ScatteredPoint], q) -> float | None:
    return ScatteredData(points).linear(q)


def interp_natural(points: Sequence[ScatteredPoint], q) -> float | None:
    return ScatteredData(points).natural(q)


def reliability_at(points: Sequence[ScatteredPoint], q, c: float) -> float:
    if not c > 0:
        raise ValueError("c must be > 0")
    return float(ScatteredData(points).reliability(q, c))


def inject_corner_virtual_sensors(points: Sequence[ScatteredPoint],
                                  spec: MapGridSpec) -> list[ScatteredPoint]:
    """Append IDW (n=2) surrogates at the four map corners.

    Corners that coincide with an existing point are skipped.
    """
    real = [p for p in points]
    if not real:
        raise ValueError("at least one point is required")
    data = ScatteredData(real)
    out = list(points)
    for k, c in enumerate(corner_positions(spec)):
        if data._coincident(c) is not None:
            continue
        out.append(ScatteredPoint(f"__corner_{k}", float(c[0]), float(c[1]),
                                  data.idw(c, 2.0), is_virtual=True))
    return out


def inject_virtual_sensors(points: Sequence[ScatteredPoint],
                           virtual: Sequence[ScatteredPoint]) -> list[ScatteredPoint]:
    out = list(points)
    real_xy = np.array([[p.x, p.y] for p in points if not p.is_virtual]).reshape(-1, 2)
    for v in virtual:
        if len(real_xy) and np.min(np.hypot(*(real_xy - [v.x, v.y]).T)) < ZERO_DISTANCE:
            raise ValueError(f"virtual sensor {v.sensor_id} duplicates a real sensor position")
        out.append(replace(v, is_virtual=True))
    return out


def generate_map(points: Sequence[ScatteredPoint], spec: MapGridSpec,
                 method: str = "idw", c: float = 1500.0, power: float = 2.0,
                 stressor: str = "", time_slot: datetime | None = None) -> ValueGrid:
    """Evaluate ``method`` and the reliability at every raster point."""
    if not points:
        raise ValueError("at least one point is required")
    if method not in ("nearest", "natural", "linear", "idw"):
        raise ValueError(f"unknown interpolation method {method!r}")
    pts = list(points)
    if method in ("natural", "linear"):
        pts = inject_corner_virtual_sensors(pts, spec)
    data = ScatteredData(pts)
    xy = raster_positions(spec)
    n1, n2 = spec.counts
    values = np.empty((n1, n2))
    for i in range(n1):
        for j in range(n2):
            q = xy[i, j]
            if method == "idw":
                v = data.idw(q, power)
            elif method == "nearest":
                v = data.nearest(q)
            elif method == "linear":
                v = data.linear(q)
            else:
                v = data.natural(q)
            if v is None:
                raise ValueError(f"raster point ({i}, {j}) lies outside the convex hull")
            values[i, j] = v
    rel = data.reliability(xy, c)
    return ValueGrid(spec, values, rel, stressor, time_slot, method)
