r"""Per-arm copula likelihood for semi-competing risks data.

For a subject with survival values ``u = S1(X)`` and ``v = S2(Y)`` the
copula factor of the likelihood is, by censoring pattern,

=================  =========================
``d1, d2``          factor ``D*``
=================  =========================
0, 0                ``C(u, v)``
1, 1                ``C_12(u, v)``
1, 0                ``C_1(u, v)``
0, 1                ``C_2(u, v)``
=================  =========================

and each observed event adds ``log(gamma * jump * exp(beta'z)) - H`` with
``H = gamma * Lambda0 * exp(beta'z)``.

Setting the score in a jump size to zero gives the self-consistency update

.. math::

    \Lambda_{01}\{t\} = \frac{d_1(t)}
        {\sum_{X_i \ge t} e^{\beta_1'Z_i}\, \gamma_i w_{1i}},
    \qquad w_{1i} = \delta_{i1} + u_i\,\partial_u D^*_i / D^*_i,

and the analogue for the terminal event with
``w2 = d2 + v * dD*/dv / D*``.  The frailty ``gamma`` enters through an
optional ``(m, n)`` bank of draws; every quantity is then averaged over the
bank.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .copula import CLAMP_EPS, CopulaSpec
from .errors import DegenerateDataError, ValidationError
from .survival import StepHazard

ALPHA_BARRIER = 1e-4


class ArmData:
    """Precomputed index structures for one treatment arm."""

    def __init__(self, x, y, d1, d2, z):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.d1 = np.asarray(d1).astype(np.int64)
        self.d2 = np.asarray(d2).astype(np.int64)
        self.z = np.asarray(z, dtype=float)
        self.n = self.x.size
        if self.d1.sum() == 0 or self.d2.sum() == 0:
            raise DegenerateDataError("arm needs at least one event of each type")
        self.t1 = np.unique(self.x[self.d1 == 1])
        self.t2 = np.unique(self.y[self.d2 == 1])
        if self.t1[0] <= 0 or self.t2[0] <= 0:
            raise ValidationError("event times must be positive")
        # cumulative index: Lambda(X_i) = cumsum(jumps)[k1_i - 1]
        self.k1 = np.searchsorted(self.t1, self.x, side="right")
        self.k2 = np.searchsorted(self.t2, self.y, side="right")
        self.count1 = np.bincount(self.k1[self.d1 == 1] - 1, minlength=self.t1.size).astype(float)
        self.count2 = np.bincount(self.k2[self.d2 == 1] - 1, minlength=self.t2.size).astype(float)
        self._ox = np.argsort(self.x, kind="stable")
        self._oy = np.argsort(self.y, kind="stable")
        self._f1 = np.searchsorted(self.x[self._ox], self.t1, side="left")
        self._f2 = np.searchsorted(self.y[self._oy], self.t2, side="left")
        self.case11 = (self.d1 == 1) & (self.d2 == 1)
        self.case10 = (self.d1 == 1) & (self.d2 == 0)
        self.case01 = (self.d1 == 0) & (self.d2 == 1)

    @classmethod
    def from_dataset(cls, data, arm: int) -> "ArmData":
        sel = data.a == arm
        return cls(data.x[sel], data.y[sel], data.d1[sel], data.d2[sel], data.z[sel])

    def risk_sum1(self, w):
        """``sum_{X_i >= t1_j} w_i`` for every T1 jump time."""
        rc = np.cumsum(w[self._ox][::-1])[::-1]
        return rc[self._f1]

    def risk_sum2(self, w):
        rc = np.cumsum(w[self._oy][::-1])[::-1]
        return rc[self._f2]


@dataclass(frozen=True, eq=False)
class ArmParams:
    """Parameter bundle of one arm: copula, regression coefficients, jumps."""

    alpha: float
    beta1: np.ndarray
    beta2: np.ndarray
    jumps1: np.ndarray
    jumps2: np.ndarray
    family: str = "frank"

    def theta(self) -> np.ndarray:
        return np.concatenate([self.beta1, self.beta2, [self.alpha]])

    def with_theta(self, theta) -> "ArmParams":
        p = self.beta1.size
        return replace(self, beta1=theta[:p].copy(), beta2=theta[p:2 * p].copy(), alpha=float(theta[-1]))

    def with_jumps(self, j1, j2) -> "ArmParams":
        return replace(self, jumps1=j1, jumps2=j2)

    def copula(self, alpha=None) -> CopulaSpec:
        return CopulaSpec(self.family, self.alpha if alpha is None else alpha)


@dataclass
class Terms:
    """Per-subject likelihood pieces (shape ``(n,)`` or ``(m, n)``)."""

    ll: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    extra: dict = field(default_factory=dict)


def _clamp(s):
    return np.clip(s, CLAMP_EPS, 1.0 - CLAMP_EPS)


def _case_select(ad: ArmData, c, c1, c2, c12):
    return np.where(ad.case11, c12, np.where(ad.case10, c1, np.where(ad.case01, c2, c)))


def _hazards(ad: ArmData, par: ArmParams, gamma):
    cum1 = np.concatenate(([0.0], np.cumsum(par.jumps1)))[ad.k1]
    cum2 = np.concatenate(([0.0], np.cumsum(par.jumps2)))[ad.k2]
    eta1 = ad.z @ par.beta1
    eta2 = ad.z @ par.beta2
    H1 = cum1 * np.exp(eta1)
    H2 = cum2 * np.exp(eta2)
    if gamma is not None:
        H1 = gamma * H1
        H2 = gamma * H2
    return eta1, eta2, H1, H2


def log_dstar(ad: ArmData, cop: CopulaSpec, u, v):
    """``log D*`` for every subject given clamped survival values."""
    p = cop.partials_interior(u, v)
    return np.log(_case_select(ad, p.c, p.c1, p.c2, p.c12))


def subject_terms(ad: ArmData, par: ArmParams, gamma=None, weights: bool = True) -> Terms:
    """Per-subject log-likelihood and EM weights.

    ``gamma`` is ``None`` (no frailty) or an array broadcastable against
    ``(n,)``, typically an ``(m, n)`` bank of frailty draws.
    """
    eta1, eta2, H1, H2 = _hazards(ad, par, gamma)
    u = _clamp(np.exp(-H1))
    v = _clamp(np.exp(-H2))
    p = par.copula().partials_interior(u, v)
    dstar = _case_select(ad, p.c, p.c1, p.c2, p.c12)
    with np.errstate(divide="ignore"):
        ll = np.log(dstar)
        lj1 = np.log(par.jumps1)[np.maximum(ad.k1 - 1, 0)]
        lj2 = np.log(par.jumps2)[np.maximum(ad.k2 - 1, 0)]
    ev1 = lj1 + eta1 - H1
    ev2 = lj2 + eta2 - H2
    if gamma is not None:
        lg = np.log(gamma)
        ev1 = ev1 + lg
        ev2 = ev2 + lg
    ll = ll + np.where(ad.d1 == 1, ev1, 0.0) + np.where(ad.d2 == 1, ev2, 0.0)
    if not weights:
        return Terms(ll, None, None, H1, H2)
    du = _case_select(ad, p.c1, p.c11, p.c12, p.c112)
    dv = _case_select(ad, p.c2, p.c12, p.c22, p.c122)
    w1 = ad.d1 + u * du / dstar
    w2 = ad.d2 + v * dv / dstar
    return Terms(ll, w1, w2, H1, H2, {"u": u, "v": v})


def loglik(ad: ArmData, par: ArmParams, gamma=None) -> float:
    """Total log-likelihood of the arm (averaged over the bank if given)."""
    t = subject_terms(ad, par, gamma, weights=False)
    ll = t.ll if t.ll.ndim == 1 else t.ll.mean(axis=0)
    return float(ll.sum())


def jump_update(ad: ArmData, par: ArmParams, gamma=None):
    """Self-consistency update of both baseline jump vectors.

    Returns ``(jumps1, jumps2)``; entries are ``nan`` where the risk-set
    denominator is not positive.
    """
    t = subject_terms(ad, par, gamma)
    gw1 = t.w1 if gamma is None else (gamma * t.w1).mean(axis=0)
    gw2 = t.w2 if gamma is None else (gamma * t.w2).mean(axis=0)
    den1 = ad.risk_sum1(np.exp(ad.z @ par.beta1) * gw1)
    den2 = ad.risk_sum2(np.exp(ad.z @ par.beta2) * gw2)
    with np.errstate(divide="ignore", invalid="ignore"):
        j1 = np.where(den1 > 0, ad.count1 / den1, np.nan)
        j2 = np.where(den2 > 0, ad.count2 / den2, np.nan)
    return j1, j2


def gradient(ad: ArmData, par: ArmParams, gamma=None, alpha_step: float | None = None) -> np.ndarray:
    """Gradient in ``(beta1, beta2, alpha)``.

    The regression part is analytic, ``sum z (d - H w)``; the copula
    parameter uses a central difference of ``log D*``.
    """
    t = subject_terms(ad, par, gamma)
    g1 = ad.d1 - t.H1 * t.w1
    g2 = ad.d2 - t.H2 * t.w2
    if g1.ndim == 2:
        g1 = g1.mean(axis=0)
        g2 = g2.mean(axis=0)
    a = par.alpha
    h = alpha_step if alpha_step is not None else 1e-5 * max(1.0, abs(a))
    u, v = t.extra["u"], t.extra["v"]
    lp = log_dstar(ad, par.copula(a + h), u, v)
    lm = log_dstar(ad, par.copula(a - h), u, v)
    ga = (lp - lm) / (2 * h)
    ga = ga.mean(axis=0).sum() if ga.ndim == 2 else ga.sum()
    return np.concatenate([ad.z.T @ g1, ad.z.T @ g2, [ga]])


def fd_hessian(ad: ArmData, par: ArmParams, gamma=None) -> np.ndarray:
    """Central-difference Hessian of :func:`gradient`, symmetrized."""
    th = par.theta()
    k = th.size
    hess = np.empty((k, k))
    for j in range(k):
        h = 1e-5 * max(1.0, abs(th[j]))
        e = np.zeros(k)
        e[j] = h
        gp = gradient(ad, par.with_theta(th + e), gamma)
        gm = gradient(ad, par.with_theta(th - e), gamma)
        hess[:, j] = (gp - gm) / (2 * h)
    return 0.5 * (hess + hess.T)


def apply_barrier(theta: np.ndarray, family: str) -> np.ndarray:
    """Keep the Frank parameter out of ``|alpha| < ALPHA_BARRIER``."""
    if family == "frank" and abs(theta[-1]) < ALPHA_BARRIER:
        theta = theta.copy()
        theta[-1] = np.copysign(ALPHA_BARRIER, theta[-1] if theta[-1] != 0 else 1.0)
    if family == "clayton" and theta[-1] <= 0:
        theta = theta.copy()
        theta[-1] = ALPHA_BARRIER
    return theta


def to_step(times, jumps) -> StepHazard:
    return StepHazard(times, np.maximum(jumps, 0.0))
