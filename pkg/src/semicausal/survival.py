"""Marginal survival building blocks.

Cumulative baseline hazards are pure jump measures (``StepHazard``), conditional
survival follows the proportional hazards form
``S(t | z, gamma) = exp(-gamma * Lambda0(t) * exp(beta'z))``, and Weibull
baselines supply the simulation truths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, NumericError, ValidationError


@dataclass(frozen=True, eq=False)
class StepHazard:
    """Right-continuous step cumulative hazard with jumps at ``times``."""

    times: np.ndarray
    jumps: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        j = np.asarray(self.jumps, dtype=float).ravel()
        if t.shape != j.shape:
            raise ValidationError("times and jumps must have the same length")
        if t.size and (np.any(np.diff(t) <= 0) or t[0] <= 0):
            raise ValidationError("jump times must be positive and strictly increasing")
        if np.any(j < 0) or not np.all(np.isfinite(j)):
            raise ValidationError("jumps must be finite and nonnegative")
        t.setflags(write=False)
        j.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "jumps", j)

    @property
    def values(self) -> np.ndarray:
        """Cumulative hazard at each jump time."""
        return np.cumsum(self.jumps)

    def _padded(self):
        return np.concatenate(([0.0], np.cumsum(self.jumps)))

    def cumulative(self, t):
        """``Lambda(t) = sum of jumps at times <= t``."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        return self._padded()[idx]

    def cumulative_left(self, t):
        """Left limit ``Lambda(t-)``."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="left")
        return self._padded()[idx]

    @classmethod
    def from_function(cls, func, grid) -> "StepHazard":
        """Discretize a continuous cumulative hazard on ``grid`` (positive, increasing)."""
        grid = np.asarray(grid, dtype=float)
        vals = np.asarray(func(grid), dtype=float)
        return cls(grid, np.diff(np.concatenate(([0.0], vals))))


@dataclass(frozen=True, eq=False)
class CoxMarginal:
    """Proportional hazards marginal ``Lambda0(t) exp(beta'z)``."""

    beta: np.ndarray
    baseline: StepHazard

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "beta", b)

    def linpred(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.beta.shape[0]:
            raise ValidationError(
                f"covariate dimension {z.shape[-1]} does not match beta ({self.beta.shape[0]})"
            )
        return z @ self.beta

    def survival_at(self, t, z, gamma=1.0):
        """``exp(-gamma * Lambda0(t) * exp(beta'z))``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValidationError("t must be nonnegative")
        if np.any(np.asarray(gamma) <= 0):
            raise ValidationError("gamma must be positive")
        return np.exp(-gamma * self.baseline.cumulative(t) * np.exp(self.linpred(z)))


@dataclass(frozen=True)
class WeibullBaseline:
    """Weibull cumulative hazard ``(t / scale) ** shape``."""

    scale: float
    shape: float

    def __post_init__(self):
        if self.scale <= 0 or self.shape <= 0:
            raise ValidationError("Weibull scale and shape must be positive")

    def cumulative(self, t):
        return (np.asarray(t, dtype=float) / self.scale) ** self.shape

    def inverse(self, h):
        return self.scale * np.asarray(h, dtype=float) ** (1.0 / self.shape)

    def survival(self, t, linpred=0.0):
        return np.exp(-self.cumulative(t) * np.exp(linpred))


def weibull_invert(w: WeibullBaseline, u, linpred=0.0):
    """Time ``t`` with ``exp(-Lambda0(t) exp(linpred)) = u``.

    ``u == 0`` maps to ``inf``.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(u > 1):
        raise ValidationError("u must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        h = -np.log(u) * np.exp(-np.asarray(linpred, dtype=float))
    return w.inverse(h)


# ---------------------------------------------------------------------------
# Cox partial likelihood


class _RiskSets:
    """Sums over risk sets ``{i : time_i >= t_j}`` at the distinct event times."""

    def __init__(self, time, event):
        self.order = np.argsort(time, kind="stable")
        ts = time[self.order]
        self.event_times = np.unique(time[event == 1])
        self.first = np.searchsorted(ts, self.event_times, side="left")
        self.counts = np.bincount(
            np.searchsorted(self.event_times, time[event == 1]),
            minlength=self.event_times.size,
        ).astype(float)

    def sums(self, w):
        """``R_j = sum_{time_i >= t_j} w_i``; ``w`` may carry trailing axes."""
        ws = w[self.order]
        rc = np.cumsum(ws[::-1], axis=0)[::-1]
        return rc[self.first]


def cox_fit(time, event, z, max_iter: int = 100, tol: float = 1e-9) -> CoxMarginal:
    """Cox regression by Newton-Raphson with Breslow ties and baseline.

    Covariate columns that are constant within the sample get a zero
    coefficient.
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event).astype(int)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    n, p = z.shape
    if event.sum() == 0:
        raise DegenerateDataError("no events to fit a Cox model")
    rs = _RiskSets(time, event)
    d = rs.counts
    zc = z - z.mean(axis=0)
    active = np.flatnonzero(np.ptp(z, axis=0) > 0) if n else np.array([], int)
    za = zc[:, active]
    zev = za[event == 1].sum(axis=0)

    def pl(b):
        eta = za @ b
        r0 = rs.sums(np.exp(eta))
        return eta[event == 1].sum() - d @ np.log(r0)

    beta = np.zeros(active.size)
    cur = pl(beta)
    converged = active.size == 0
    for _ in range(max_iter):
        if converged:
            break
        w = np.exp(za @ beta)
        r0 = rs.sums(w)
        r1 = rs.sums(za * w[:, None])
        r2 = rs.sums(za[:, :, None] * za[:, None, :] * w[:, None, None])
        m1 = r1 / r0[:, None]
        grad = zev - d @ m1
        info = np.einsum("j,jkl->kl", d, r2 / r0[:, None, None]) - np.einsum(
            "j,jk,jl->kl", d, m1, m1
        )
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info + 1e-8 * np.eye(active.size), grad, rcond=None)[0]
        s = 1.0
        for _ in range(30):
            cand = beta + s * step
            new = pl(cand)
            if np.isfinite(new) and new >= cur - 1e-12:
                break
            s *= 0.5
        beta, cur = cand, new
        if np.max(np.abs(s * step)) < tol:
            converged = True
    if not converged:
        raise NumericError(f"Cox Newton iterations did not converge in {max_iter} steps")
    full = np.zeros(p)
    full[active] = beta
    # baseline on the uncentred scale
    w = np.exp(z @ full)
    jumps = d / rs.sums(w)
    return CoxMarginal(full, StepHazard(rs.event_times, jumps))


def cox_fit_event2(data, arm: int) -> CoxMarginal:
    """Cox fit of the terminal event ``(Y, delta2)`` within one treatment arm."""
    sub = data.arm(arm)
    if sub.n == 0 or sub.d2.sum() == 0:
        raise DegenerateDataError(f"no terminal events in arm {arm}")
    return cox_fit(sub.y, sub.d2, sub.z)


def nelson_aalen(time, event) -> StepHazard:
    """Nelson-Aalen cumulative hazard."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event).astype(int)
    rs = _RiskSets(time, event)
    return StepHazard(rs.event_times, rs.counts / rs.sums(np.ones_like(time)))
