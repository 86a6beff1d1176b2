"""ARX(p, q) estimation and simulation.

The model is

    x_t = a_1 x_{t-1} + ... + a_p x_{t-p} + b_0 u_t + ... + b_{q-1} u_{t-q+1} + n_t

where ``u`` is an exogenous input indexed circularly: ``u[(u_offset + t) % len(u)]``.
Passing an array of the same length as ``x`` with ``u_offset=0`` gives
ordinary linear indexing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegenerateDataError(ValueError):
    """The regressor matrix is rank deficient."""


@dataclass(frozen=True)
class ArxModel:
    p: int
    q: int
    a: np.ndarray
    b: np.ndarray
    residuals: np.ndarray = field(repr=False)
    rmse: float = float("nan")
    n_samples: int = 0

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.a, self.b])

    @property
    def lag(self) -> int:
        """Index of the first time step with a full regressor row."""
        return max(self.p, self.q - 1)

    def to_text(self) -> str:
        """Plain-text record: orders, coefficients and a residual summary."""
        res = self.residuals
        lines = [
            f"ARX p={self.p} q={self.q}",
            "a " + " ".join(repr(float(v)) for v in self.a),
            "b " + " ".join(repr(float(v)) for v in self.b),
            f"rmse {float(self.rmse)!r}",
            f"n_samples {self.n_samples}",
            f"residuals n={len(res)} mean={float(np.mean(res)) if len(res) else 0.0!r}"
            f" std={float(np.std(res)) if len(res) else 0.0!r}",
        ]
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text: str) -> "ArxModel":
        rows = dict(line.split(" ", 1) for line in text.strip().splitlines())
        orders = dict(kv.split("=") for kv in rows["ARX"].split())
        a = np.array([float(v) for v in rows["a"].split()])
        b = np.array([float(v) for v in rows["b"].split()])
        return cls(int(orders["p"]), int(orders["q"]), a, b, np.empty(0),
                   float(rows["rmse"]), int(rows["n_samples"]))


def _circular(u, n: int, offset: int = 0, start: int = 0) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return u[(offset + start + np.arange(n)) % len(u)]


def regressors(x, u, p: int, q: int, u_offset: int = 0):
    """Design matrix and targets over rows ``t = max(p, q-1) ... n-1``."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    m = max(p, q - 1)
    t = np.arange(m, n)
    uu = _circular(u, n, u_offset)
    cols = [x[t - i] for i in range(1, p + 1)] + [uu[t - j] for j in range(q)]
    phi = np.column_stack(cols) if cols else np.empty((len(t), 0))
    return phi, x[t]


def fit_arx(x, u, p: int = 2, q: int = 2, u_offset: int = 0) -> ArxModel:
    """Least-squares ARX fit using an orthogonal (SVD) solver."""
    x = np.asarray(x, dtype=float)
    if p < 0 or q < 0 or p + q < 1:
        raise ValueError("orders must satisfy p, q >= 0 and p + q >= 1")
    if np.any(~np.isfinite(x)):
        raise ValueError("x must not contain missing values")
    if len(x) <= 2 * (p + q):
        raise ValueError(f"need more than {2 * (p + q)} samples, got {len(x)}")
    phi, y = regressors(x, u, p, q, u_offset)
    theta, _, rank, sv = np.linalg.lstsq(phi, y, rcond=None)
    if rank < p + q or sv[0] == 0.0:
        raise DegenerateDataError(f"regressor matrix has rank {rank} < {p + q}")
    resid = y - phi @ theta
    return ArxModel(
        p, q, theta[:p].copy(), theta[p:].copy(), resid,
        float(np.sqrt(np.mean(resid ** 2))), len(x),
    )


def simulate(model: ArxModel, init_state, u, noise, horizon: int | None = None,
             u_offset: int = 0) -> np.ndarray:
    """Roll the model forward from ``init_state`` (the last p outputs, oldest first).

    ``u`` is indexed circularly with step 0 the first simulated step, so
    ``u[(u_offset - j) % len(u)]`` supplies the lagged inputs. ``noise`` may be
    1-D (one trajectory) or 2-D ``(n_traj, horizon)``.
    """
    init = np.asarray(init_state, dtype=float)
    if init.shape != (model.p,):
        raise ValueError(f"init_state must have length p={model.p}")
    noise = np.asarray(noise, dtype=float)
    single = noise.ndim == 1
    noise = np.atleast_2d(noise)
    if horizon is None:
        horizon = noise.shape[1]
    if noise.shape[1] != horizon:
        raise ValueError("noise length must equal horizon")
    q = model.q
    uu = _circular(u, horizon + q - 1, u_offset, start=-(q - 1)) if q else np.empty(0)
    # Deterministic input contribution per step.
    drive = np.array([
        sum(model.b[j] * uu[t - j + q - 1] for j in range(q)) for t in range(horizon)
    ])
    out = np.empty((noise.shape[0], model.p + horizon))
    out[:, :model.p] = init
    a = model.a
    for t in range(horizon):
        k = model.p + t
        ar = out[:, k - model.p:k][:, ::-1] @ a if model.p else 0.0
        out[:, k] = ar + drive[t] + noise[:, t]
    res = out[:, model.p:]
    return res[0] if single else res


def one_step_predictions(model: ArxModel, x, u, u_offset: int = 0) -> np.ndarray:
    phi, _ = regressors(x, u, model.p, model.q, u_offset)
    return phi @ model.theta


def fit_rmse(model: ArxModel, x, u, start: int = 0, stop: int | None = None,
             u_offset: int = 0) -> float:
    """RMSE of one-step-ahead predictions for targets ``x[start:stop]``.

    Time steps without a full regressor row are skipped.
    """
    x = np.asarray(x, dtype=float)
    stop = len(x) if stop is None else stop
    lo = max(start, model.lag)
    if not (0 <= start and stop <= len(x)) or lo >= stop:
        raise ValueError("empty or out-of-range evaluation window")
    phi, y = regressors(x[:stop], u, model.p, model.q, u_offset)
    err = (y - phi @ model.theta)[lo - model.lag:]
    return float(np.sqrt(np.mean(err ** 2)))
