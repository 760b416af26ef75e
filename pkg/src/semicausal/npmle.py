"""Semiparametric maximum likelihood without frailty.

Each arm is fitted separately by block coordinate ascent on the observed-data
log-likelihood:

1. the baseline jump sizes get the self-consistency update of
   :func:`semicausal.likelihood.jump_update`, damped geometrically until the
   likelihood does not decrease;
2. ``(beta1, beta2, alpha)`` get up to a few damped Newton steps with an
   analytic gradient and a finite-difference Hessian.

The same block steps are reused by the frailty fitter with a bank of
frailty draws in place of ``gamma = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .copula import CopulaSpec, alpha_from_tau
from .errors import DegenerateDataError, NumericError, ValidationError
from .likelihood import (
    ArmData,
    ArmParams,
    apply_barrier,
    fd_hessian,
    gradient,
    jump_update,
    loglik as _loglik,
    to_step,
)
from .survival import StepHazard, cox_fit

RIDGE = 1e-8
TAU_GRID = tuple(np.round(np.arange(-0.8, 0.81, 0.1), 10))
MIN_PAIRS = 10


@dataclass(frozen=True, eq=False)
class ArmFit:
    """Fitted parameters of one treatment arm."""

    alpha: float
    beta1: np.ndarray
    beta2: np.ndarray
    lambda01: StepHazard
    lambda02: StepHazard
    converged: bool = False
    loglik: float = float("nan")
    iterations: int = 0
    family: str = "frank"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "beta1", np.atleast_1d(np.asarray(self.beta1, dtype=float)))
        object.__setattr__(self, "beta2", np.atleast_1d(np.asarray(self.beta2, dtype=float)))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def tau(self) -> float:
        return CopulaSpec(self.family, self.alpha).tau()

    def copula(self) -> CopulaSpec:
        return CopulaSpec(self.family, self.alpha)

    def params_on(self, ad: ArmData) -> ArmParams:
        """Jump vectors aligned with the event times of ``ad``."""
        return ArmParams(
            self.alpha, self.beta1, self.beta2,
            _align(self.lambda01, ad.t1), _align(self.lambda02, ad.t2), self.family,
        )


@dataclass(frozen=True, eq=False)
class ModelFit:
    """Both arms plus the frailty variance used to fit them."""

    arm0: ArmFit
    arm1: ArmFit
    sigma: float = 0.0
    covariate_names: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    def arm(self, a: int) -> ArmFit:
        if a not in (0, 1):
            raise ValidationError("arm must be 0 or 1")
        return self.arm1 if a == 1 else self.arm0

    @property
    def converged(self) -> bool:
        return self.arm0.converged and self.arm1.converged


def _align(h: StepHazard, times) -> np.ndarray:
    idx = np.searchsorted(times, h.times)
    ok = (idx < len(times)) & (times[np.minimum(idx, len(times) - 1)] == h.times)
    if not np.all(ok | (h.jumps == 0)):
        raise ValidationError("baseline hazard has mass away from the observed event times")
    out = np.zeros(len(times))
    out[idx[ok]] = h.jumps[ok]
    return out


def _arm_params(params, ad: ArmData) -> ArmParams:
    if isinstance(params, ArmParams):
        return params
    return params.params_on(ad)


def loglik(data, arm: int, params) -> float:
    """Observed-data log-likelihood of arm ``arm`` at ``params``.

    ``params`` is an :class:`ArmFit` or an
    :class:`~semicausal.likelihood.ArmParams`.  A zero jump at an observed
    event time gives ``-inf``; ``diagnostics`` of the returned value is not
    available, so callers should check :func:`numpy.isfinite`.
    """
    ad = ArmData.from_dataset(data, arm)
    par = _arm_params(params, ad)
    if par.beta1.size != ad.z.shape[1]:
        raise ValidationError("beta dimension does not match the covariates")
    return _loglik(ad, par)


# ---------------------------------------------------------------------------
# initialization


def _kendall_pairs(ad: ArmData):
    both = ad.case11
    if both.sum() < MIN_PAIRS:
        return None
    tau = stats.kendalltau(ad.x[both], ad.y[both]).statistic
    return float(tau) if np.isfinite(tau) else None


def initial_params(ad: ArmData, family: str = "frank") -> tuple[ArmParams, dict]:
    """Three-stage starting values.

    Stage 1 fits a Cox model to ``(Y, d2)``; stage 3 a naive Cox model to
    ``(X, d1)``; stage 2 picks the copula parameter maximizing the
    likelihood among the inverted empirical Kendall tau of doubly observed
    pairs and a grid of tau values.
    """
    m2 = cox_fit(ad.y, ad.d2, ad.z)
    m1 = cox_fit(ad.x, ad.d1, ad.z)
    j1 = _align(m1.baseline, ad.t1)
    j2 = _align(m2.baseline, ad.t2)
    emp = _kendall_pairs(ad)
    cands = list(TAU_GRID)
    if emp is not None:
        cands.append(float(np.clip(emp, -0.9, 0.9)))
    if family == "clayton":
        cands = [t for t in cands if t > 0]
    best, best_ll = None, -np.inf
    for t in cands:
        a = alpha_from_tau(family, t)
        if family == "frank" and a == 0.0:
            a = 1e-4
        par = ArmParams(a, m1.beta, m2.beta, j1, j2, family)
        ll = _loglik(ad, par)
        if ll > best_ll:
            best, best_ll = par, ll
    if best is None:
        raise NumericError("no finite log-likelihood among the initial candidates")
    diag = {"empirical_tau": emp, "fallback": emp is None, "initial_loglik": best_ll,
            "initial_tau": CopulaSpec(family, best.alpha).tau()}
    return best, diag


def initialize(data, arm: int, family: str = "frank") -> ArmFit:
    """Starting values for one arm, packaged as an :class:`ArmFit`."""
    ad = ArmData.from_dataset(data, arm)
    par, diag = initial_params(ad, family)
    return _to_armfit(ad, par, False, diag["initial_loglik"], 0, diag)


def _to_armfit(ad, par, converged, ll, iters, diag) -> ArmFit:
    return ArmFit(
        par.alpha, par.beta1.copy(), par.beta2.copy(),
        to_step(ad.t1, par.jumps1), to_step(ad.t2, par.jumps2),
        converged, float(ll), iters, par.family, diag,
    )


# ---------------------------------------------------------------------------
# block steps


def jump_step(ad: ArmData, par: ArmParams, cur: float, gamma=None, max_halvings: int = 20):
    """Damped self-consistency update of the jump sizes.

    The candidate ``old**(1-s) * new**s`` is tried for ``s = 1, 1/2, ...``
    until the objective does not decrease.  Returns ``(params, value, ok)``.
    """
    j1, j2 = jump_update(ad, par, gamma)
    if not (np.all(np.isfinite(j1)) and np.all(np.isfinite(j2))):
        return par, cur, False
    l1o, l2o = np.log(par.jumps1), np.log(par.jumps2)
    l1n, l2n = np.log(j1), np.log(j2)
    s = 1.0
    for _ in range(max_halvings + 1):
        cand = par.with_jumps(np.exp(l1o + s * (l1n - l1o)), np.exp(l2o + s * (l2n - l2o)))
        val = _loglik(ad, cand, gamma)
        if np.isfinite(val) and val >= cur - 1e-10:
            return cand, val, True
        s *= 0.5
    return par, cur, False


def newton_step(ad: ArmData, par: ArmParams, cur: float, gamma=None, max_halvings: int = 20,
                hess=None, hess_gamma=None):
    """One damped Newton step in ``(beta1, beta2, alpha)``.

    The negative Hessian is made positive definite by flooring its
    eigenvalues, so the direction is always an ascent direction.  A
    previously computed ``hess`` may be passed to skip the finite-difference
    evaluation, and ``hess_gamma`` (a smaller frailty bank) may stand in for
    ``gamma`` when the Hessian is evaluated.  Returns
    ``(params, value, ok, hess)``.
    """
    th = par.theta()
    g = gradient(ad, par, gamma)
    if hess is None:
        hess = fd_hessian(ad, par, gamma if hess_gamma is None else hess_gamma)
    lam, vec = np.linalg.eigh(-hess)
    floor = max(RIDGE, 1e-6 * np.max(np.abs(lam)))
    lam = np.maximum(lam, floor)
    step = vec @ ((vec.T @ g) / lam)
    s = 1.0
    for _ in range(max_halvings + 1):
        cand_th = apply_barrier(th + s * step, par.family)
        cand = par.with_theta(cand_th)
        val = _loglik(ad, cand, gamma)
        if np.isfinite(val) and val >= cur - 1e-10:
            return cand, val, s == 1.0, hess
        s *= 0.5
    return par, cur, False, hess


def _change(old: ArmParams, new: ArmParams) -> float:
    dth = np.max(np.abs(new.theta() - old.theta()))
    dl1 = np.max(np.abs(np.log1p(np.cumsum(new.jumps1)) - np.log1p(np.cumsum(old.jumps1))))
    dl2 = np.max(np.abs(np.log1p(np.cumsum(new.jumps2)) - np.log1p(np.cumsum(old.jumps2))))
    return float(max(dth, dl1, dl2))


def ascend(ad: ArmData, par: ArmParams, gamma=None, max_iter: int = 200, tol: float = 1e-4,
           newton_per_iter: int = 3, hess_every: int = 10, hess_gamma=None):
    """Block coordinate ascent from ``par``.

    The finite-difference Hessian is refreshed every ``hess_every`` outer
    iterations or whenever a full Newton step is rejected; ascent is
    guaranteed by step halving either way.  ``hess_gamma`` is passed on to
    :func:`newton_step`.

    Returns ``(params, value, converged, iterations, trace)``.
    """
    cur = _loglik(ad, par, gamma)
    if not np.isfinite(cur):
        raise NumericError("non-finite log-likelihood at the starting values")
    trace = [cur]
    converged = False
    hess = None
    it = 0
    for it in range(1, max_iter + 1):
        old = par
        if (it - 1) % hess_every == 0:
            hess = None
        par, cur, ok_j = jump_step(ad, par, cur, gamma)
        moved = False
        for _ in range(newton_per_iter):
            prev, prev_val = par.theta(), cur
            par, cur, full, hess = newton_step(ad, par, cur, gamma, hess=hess, hess_gamma=hess_gamma)
            moved = moved or cur > prev_val
            if not full:
                hess = None
            if np.max(np.abs(par.theta() - prev)) < tol:
                break
        trace.append(cur)
        if _change(old, par) < tol:
            converged = True
            break
        if not ok_j and not moved:
            break
    return par, cur, converged, it, trace


def fit_arm(data, arm: int, family: str = "frank", max_iter: int = 200, tol: float = 1e-4) -> ArmFit:
    ad = ArmData.from_dataset(data, arm)
    par, diag = initial_params(ad, family)
    par, ll, conv, iters, trace = ascend(ad, par, None, max_iter, tol)
    diag = dict(diag, loglik_trace=trace)
    return _to_armfit(ad, par, conv, ll, iters, diag)


def fit(data, family: str = "frank", max_iter: int = 200, tol: float = 1e-4) -> ModelFit:
    """Fit both arms by maximum likelihood without frailty.

    Parameters
    ----------
    data : Dataset
    family : {'frank', 'clayton'}
    max_iter : int
        Maximum outer (jump + Newton) iterations per arm.
    tol : float
        Convergence threshold on the largest absolute change of
        ``(beta, alpha)`` and of ``log1p`` of the cumulative baselines.

    Returns
    -------
    ModelFit
        With ``sigma = 0``.  Arms that hit ``max_iter`` or cannot improve
        are returned with ``converged = False``.
    """
    arms = []
    for a in (0, 1):
        if not np.any(data.a == a):
            raise DegenerateDataError(f"arm {a} has no subjects")
        arms.append(fit_arm(data, a, family, max_iter, tol))
    return ModelFit(arms[0], arms[1], 0.0, tuple(data.covariate_names))
