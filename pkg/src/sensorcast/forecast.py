"""Residual bootstrap and Monte Carlo forecasts with prediction bands."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Mapping, Sequence

import numpy as np

from .preprocess import local_slots
from .timeseries import ArxModel, simulate


@dataclass(frozen=True)
class BucketedEdf:
    """One empirical residual distribution per time-of-day slot.

    Buckets with fewer than ``min_count`` residuals borrow the pooled sample;
    ``counts`` keeps the original per-bucket sizes.
    """

    step_minutes: int
    samples: tuple[np.ndarray, ...]
    counts: np.ndarray
    pooled: np.ndarray = field(repr=False)

    @property
    def n_buckets(self) -> int:
        return len(self.samples)

    def cdf(self, x, bucket: int | None = None):
        s = self.pooled if bucket is None else self.samples[bucket]
        return np.searchsorted(s, x, side="right") / len(s)


def build_edf(residuals, timestamps, step_minutes: int, tz: str = "UTC",
              min_count: int = 10) -> BucketedEdf:
    res = np.asarray(residuals, dtype=float)
    if res.size == 0:
        raise ValueError("build_edf needs at least one residual")
    slots = local_slots(timestamps, step_minutes, tz)
    if len(slots) != len(res):
        raise ValueError("residuals and timestamps differ in length")
    return edf_from_buckets(res, slots, step_minutes, min_count)


def edf_from_buckets(residuals, buckets, step_minutes: int, min_count: int = 10) -> BucketedEdf:
    res = np.asarray(residuals, dtype=float)
    buckets = np.asarray(buckets, dtype=int)
    n_buckets = 1440 // step_minutes
    pooled = np.sort(res)
    samples, counts = [], np.zeros(n_buckets, dtype=int)
    for k in range(n_buckets):
        s = np.sort(res[buckets == k])
        counts[k] = len(s)
        samples.append(s if len(s) >= min_count else pooled)
    return BucketedEdf(step_minutes, tuple(samples), counts, pooled)


def sample_noise(edf: BucketedEdf, bucket: int, rng: np.random.Generator) -> float:
    s = edf.samples[bucket]
    return float(s[rng.integers(len(s))])


@dataclass(frozen=True)
class ForecastResult:
    start: datetime
    step_minutes: int
    mean: np.ndarray
    lower: Mapping[float, np.ndarray]
    upper: Mapping[float, np.ndarray]
    n_trajectories: int
    stressor: str = ""
    sensor_id: str = ""

    def transformed(self, fn) -> "ForecastResult":
        """Apply a monotone increasing map to every trajectory summary."""
        return ForecastResult(
            self.start, self.step_minutes, fn(self.mean),
            {a: fn(v) for a, v in self.lower.items()},
            {a: fn(v) for a, v in self.upper.items()},
            self.n_trajectories, self.stressor, self.sensor_id,
        )


def _rank(alpha: float, n: int) -> int:
    # ceil(alpha * n) guarded against representation error (0.95 * 100).
    return max(1, math.ceil(alpha * n - 1e-9))


def prediction_bands(trajectories: np.ndarray, levels: Sequence[float]):
    """Pointwise order-statistic bands.

    ``upper`` is the smallest value v with ``#(values <= v) / n >= alpha`` and
    ``lower`` the largest value v with ``#(values >= v) / n >= alpha``.
    """
    srt = np.sort(trajectories, axis=0)
    n = srt.shape[0]
    lower, upper = {}, {}
    for alpha in levels:
        k = _rank(alpha, n)
        upper[alpha] = srt[k - 1].copy()
        lower[alpha] = srt[n - k].copy()
    return lower, upper


def bootstrap_noise(edf: BucketedEdf, buckets: Sequence[int], n_traj: int,
                    seed: int) -> np.ndarray:
    """Noise matrix ``(n_traj, horizon)``; trajectory ``i`` uses its own
    spawned stream so results do not depend on how trajectories are split
    across workers."""
    streams = np.random.SeedSequence(seed).spawn(n_traj)
    horizon = len(buckets)
    r = np.empty((n_traj, horizon))
    for i, ss in enumerate(streams):
        r[i] = np.random.Generator(np.random.PCG64(ss)).random(horizon)
    out = np.empty((n_traj, horizon))
    for t, b in enumerate(buckets):
        s = edf.samples[b]
        out[:, t] = s[np.minimum((r[:, t] * len(s)).astype(int), len(s) - 1)]
    return out


def monte_carlo_forecast(model: ArxModel, init_state, u, edf: BucketedEdf,
                         horizon: int, n_traj: int = 1000,
                         levels: Sequence[float] = (0.90, 0.95, 0.98),
                         rng_seed: int = 0, *, buckets: Sequence[int] | None = None,
                         u_offset: int = 0, start: datetime | None = None,
                         stressor: str = "", sensor_id: str = "",
                         return_trajectories: bool = False):
    """Simulate ``n_traj`` bootstrap trajectories and summarise them.

    The forecast is the trajectory mean, never the noise-free response.
    ``buckets`` gives the EDF slot of each forecast step; by default steps
    are assigned cyclically starting at slot 0.
    """
    if n_traj < 100:
        raise ValueError("n_traj must be >= 100")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not np.all(np.isfinite(model.theta)):
        raise ValueError("degenerate model")
    if buckets is None:
        buckets = [t % edf.n_buckets for t in range(horizon)]
    if len(buckets) != horizon:
        raise ValueError("need one bucket per forecast step")
    noise = bootstrap_noise(edf, buckets, n_traj, rng_seed)
    traj = simulate(model, init_state, u, noise, horizon, u_offset=u_offset)
    lower, upper = prediction_bands(traj, levels)
    result = ForecastResult(
        start=start, step_minutes=edf.step_minutes, mean=traj.mean(axis=0),
        lower=lower, upper=upper, n_trajectories=n_traj,
        stressor=stressor, sensor_id=sensor_id,
    )
    if return_trajectories:
        return result, traj
    return result
