"""Cleaning raw sensor series: outliers, regular grid, scaling, gaps,
band-pass smoothing and diurnal typical values.

Missing slots are represented as ``NaN`` in ``RegularSeries.values``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from typing import Sequence

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .model import RawReading, utc

MISSING = np.nan
MAD_SCALE = 1.4826


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True)
class RegularSeries:
    start: datetime
    step_minutes: int
    values: np.ndarray
    stressor: str = ""
    scale_meta: tuple[float, float] | None = None
    degenerate: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or len(vals) < 1:
            raise PreprocessError("series needs at least one slot")
        if np.any(np.isinf(vals)):
            raise PreprocessError("series values must be finite or missing")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.values)

    @property
    def end(self) -> datetime:
        return self.start + timedelta(minutes=self.step_minutes * len(self.values))

    def times(self) -> np.ndarray:
        """Slot start instants as ``datetime64[s]`` (UTC)."""
        t0 = np.datetime64(self.start.replace(tzinfo=None), "s")
        return t0 + np.arange(len(self.values)) * np.timedelta64(60 * self.step_minutes, "s")


@dataclass(frozen=True)
class TypicalProfile:
    step_minutes: int
    slots: np.ndarray
    window_days: int
    as_of: datetime

    def __getitem__(self, t):
        return self.slots[np.asarray(t) % len(self.slots)]


def local_slots(times, step_minutes: int, tz: str = "UTC") -> np.ndarray:
    """Time-of-day slot index of each UTC instant in local civil time."""
    idx = pd.DatetimeIndex(np.asarray(times, dtype="datetime64[s]")).tz_localize("UTC")
    if tz != "UTC":
        idx = idx.tz_convert(tz)
    minutes = idx.hour * 60 + idx.minute
    return np.asarray(minutes // step_minutes, dtype=int)


def hampel_filter(values: Sequence[float], window_half: int = 3, k: float = 3.0):
    """Replace points far from their window median by that median.

    A point is an outlier when it deviates from the median of the
    ``2 * window_half + 1`` window (truncated at the edges) by more than
    ``k`` times the MAD-based scale estimate ``1.4826 * MAD``.

    Returns
    -------
    filtered : ndarray
    outliers : list of int
        Indices that were replaced.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise PreprocessError("hampel_filter needs a non-empty series")
    if window_half < 1 or not k > 0:
        raise PreprocessError("window_half must be >= 1 and k > 0")
    n = len(x)
    med = np.empty(n)
    scale = np.empty(n)
    width = 2 * window_half + 1
    if n >= width:
        win = sliding_window_view(x, width)
        m = np.median(win, axis=1)
        med[window_half:n - window_half] = m
        scale[window_half:n - window_half] = MAD_SCALE * np.median(
            np.abs(win - m[:, None]), axis=1
        )
        edges = list(range(window_half)) + list(range(n - window_half, n))
    else:
        edges = range(n)
    for i in edges:
        w = x[max(0, i - window_half):i + window_half + 1]
        m = np.median(w)
        med[i] = m
        scale[i] = MAD_SCALE * np.median(np.abs(w - m))
    flagged = np.abs(x - med) > k * scale
    out = np.where(flagged, med, x)
    return out, np.flatnonzero(flagged).tolist()


def _floor_to_step(dt: datetime, step_minutes: int) -> datetime:
    step = 60 * step_minutes
    ts = int(dt.timestamp())
    return datetime.fromtimestamp(ts - ts % step, tz=timezone.utc)


def discretize_values(times, values, step_minutes: int,
                      interval: tuple[datetime, datetime], stressor: str = "") -> RegularSeries:
    """Average ``values`` at UTC ``times`` into slots of ``step_minutes``.

    Slots are aligned to the epoch step grid; the first slot contains the
    interval start and the last slot ends at or after the interval end.
    """
    if step_minutes < 1 or 1440 % step_minutes:
        raise PreprocessError("step_minutes must divide 1440")
    start, end = utc(interval[0]), utc(interval[1])
    if (end - start) < timedelta(minutes=step_minutes):
        raise PreprocessError("interval is shorter than one step")
    first = _floor_to_step(start, step_minutes)
    step_s = 60 * step_minutes
    n = -(-int((end - first).total_seconds()) // step_s)
    t = np.asarray(times, dtype="datetime64[s]").astype(np.int64)
    v = np.asarray(values, dtype=float)
    idx = (t - int(first.timestamp())) // step_s
    ok = (idx >= 0) & (idx < n)
    sums = np.bincount(idx[ok], weights=v[ok], minlength=n)
    counts = np.bincount(idx[ok], minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(counts > 0, sums / np.maximum(counts, 1), MISSING)
    return RegularSeries(first, step_minutes, out, stressor=stressor)


def discretize(readings: Sequence[RawReading], step_minutes: int,
               interval: tuple[datetime, datetime]) -> RegularSeries:
    times = np.array([r.timestamp.replace(tzinfo=None) for r in readings], dtype="datetime64[s]")
    values = [r.value for r in readings]
    stressor = readings[0].label if readings else ""
    return discretize_values(times, values, step_minutes, interval, stressor)


def standardize(series: RegularSeries) -> RegularSeries:
    """Centre and scale present values with the sample (n-1) std.

    A constant series is degenerate: it maps to zeros with scale 1 and the
    ``degenerate`` flag set.
    """
    mask = series.present
    if mask.sum() < 2:
        raise PreprocessError("standardize needs at least 2 present values")
    present = series.values[mask]
    mu = float(np.mean(present))
    sigma = float(np.std(present, ddof=1))
    out = series.values.copy()
    if sigma == 0.0 or not np.isfinite(sigma):
        out[mask] = 0.0
        return replace(series, values=out, scale_meta=(mu, 1.0), degenerate=True)
    out[mask] = (present - mu) / sigma
    return replace(series, values=out, scale_meta=(mu, sigma), degenerate=False)


def invert_scaling(values, scale_meta: tuple[float, float]):
    mu, sigma = scale_meta
    return np.asarray(values, dtype=float) * sigma + mu


def _ar_design(x: np.ndarray, order: int, rows: np.ndarray):
    lags = np.column_stack([x[rows - i] for i in range(1, order + 1)])
    return lags, x[rows]


def impute_missing(series: RegularSeries, init_order: int = 2,
                   tol: float = 1e-6, max_iter: int = 10):
    """Fill missing slots with one-step predictions of a least-squares AR model.

    The first fit uses only rows whose target and lags are all observed;
    later passes refit on the completed series (rows with observed target)
    and refill, until imputed values move by less than ``tol``. Slots
    before the first observation have no history and are set to 0.

    Returns the completed series and the list of imputed indices.
    """
    x = series.values.copy()
    present = series.present
    missing = np.flatnonzero(~present)
    if missing.size == 0:
        return replace(series, values=x), []
    if present.sum() < 2 * init_order:
        raise PreprocessError("too few present values for imputation")
    n = len(x)
    p = init_order
    first = int(np.argmax(present))
    x[:first] = 0.0
    rows_all = np.arange(p, n)
    full = present[rows_all].copy()
    for i in range(1, p + 1):
        full &= present[rows_all - i]
    rows = rows_all[full]
    if rows.size < p:
        raise PreprocessError("no contiguous observed runs long enough to fit AR model")

    interior = missing[missing >= first]
    prev = np.zeros(interior.size)
    coef = None
    for it in range(max_iter):
        lags, target = _ar_design(np.nan_to_num(x), p, rows)
        coef, *_ = np.linalg.lstsq(lags, target, rcond=None)
        for t in interior:
            hist = np.array([x[t - i] if t - i >= 0 else 0.0 for i in range(1, p + 1)])
            x[t] = float(hist @ coef)
        cur = x[interior]
        if it > 0 and np.max(np.abs(cur - prev), initial=0.0) < tol:
            break
        prev = cur.copy()
        rows = rows_all[present[rows_all]]
    return replace(series, values=x), missing.tolist()


def sinc_smooth(series: RegularSeries, low_cut: float, high_cut: float) -> RegularSeries:
    """Band-pass by zeroing DFT bins with ``|f|`` outside ``[low_cut, high_cut]``
    (cycles per day). Equivalent to circular convolution with a sinc kernel.
    """
    x = series.values
    if np.any(np.isnan(x)):
        raise PreprocessError("sinc_smooth needs a series without missing values")
    if len(x) < 4:
        raise PreprocessError("sinc_smooth needs at least 4 samples")
    d = series.step_minutes / 1440.0
    nyquist = 0.5 / d
    if not (0.0 <= low_cut < high_cut <= nyquist * (1 + 1e-12)):
        raise PreprocessError(
            f"cut frequencies must satisfy 0 <= low < high <= {nyquist:g} cycles/day"
        )
    f = np.abs(np.fft.fftfreq(len(x), d=d))
    eps = 1e-9 * nyquist
    keep = (f >= low_cut - eps) & (f <= high_cut + eps)
    if low_cut == 0.0:
        keep[0] = True
    spec = np.fft.fft(x)
    spec[~keep] = 0.0
    return replace(series, values=np.fft.ifft(spec).real)


def typical_profile(series: RegularSeries, window_days: int = 30,
                    tz: str = "UTC") -> TypicalProfile:
    """Mean value per local time-of-day slot over the trailing window."""
    step = series.step_minutes
    per_day = 1440 // step
    need = window_days * per_day
    if len(series) < need:
        raise PreprocessError(
            f"typical_profile needs {window_days} days of history, got {len(series) / per_day:.2f}"
        )
    vals = series.values[-need:]
    if np.any(np.isnan(vals)):
        raise PreprocessError("typical_profile needs a series without missing values")
    slots = local_slots(series.times()[-need:], step, tz)
    sums = np.bincount(slots, weights=vals, minlength=per_day)
    counts = np.bincount(slots, minlength=per_day)
    if np.any(counts == 0):
        raise PreprocessError("some time-of-day slots have no values")
    return TypicalProfile(step, sums / counts, window_days, series.end)
