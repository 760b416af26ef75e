r"""Stratum-specific survivor causal effects from a fitted copula model.

Given a fitted arm ``a`` and covariates ``z`` the marginal survivals
``S_k(.|a,z)`` are step functions.  With positive jump masses
``m_k(s) = S_k(s-) - S_k(s)`` and integrands evaluated at left limits,

.. math::

    D_1(s) = C_1\{S_1(s-), S_2(s-)\}, \qquad D_2(s) = C_2\{S_1(s-), S_2(s-)\},

the stratum survivals are

.. math::

    S_1^{AD}(t) = \frac{\sum_{s>t} D_1 m_1}{\sum_s D_1 m_1}, \quad
    S_2^{AD}(t) = \frac{S_2(t) - \sum_{s>t} D_2 m_2}{1 - \sum_s D_2 m_2}, \quad
    S_2^{ND}(t) = \frac{\sum_{s>t} D_2 m_2}{\sum_s D_2 m_2}.

``sum_s D_1 m_1`` estimates ``P(T1 < T2 | a, z)`` and ``sum_s D_2 m_2``
estimates ``P(T2 < T1 | a, z)``.  Each population effect averages the
world-1 minus world-0 difference over the empirical covariate law, weighted
by the product of the two worlds' stratum probabilities.  The frailty
version repeats the computation with survivals raised to the power ``gamma``
and averages over draws of ``gamma`` as well.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .copula import CLAMP_EPS, CopulaSpec
from .errors import DegenerateStratumError, ValidationError

PI_FLOOR = 1e-10
ESTIMANDS = ("ad_sce1", "ad_sce2", "nd_sce2")


@dataclass(eq=False)
class SceCurve:
    """Point estimates (and optional bands) of the three SCE curves on a grid."""

    grid: np.ndarray
    ad_sce1: np.ndarray
    ad_sce2: np.ndarray
    nd_sce2: np.ndarray
    ci_lower: dict | None = None
    ci_upper: dict | None = None
    pi_ad: np.ndarray = field(default_factory=lambda: np.full(2, np.nan))
    pi_nd: np.ndarray = field(default_factory=lambda: np.full(2, np.nan))

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        for name in ESTIMANDS:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.grid.shape:
                raise ValidationError(f"{name} does not match the grid")
            setattr(self, name, arr)
        self.pi_ad = np.asarray(self.pi_ad, dtype=float)
        self.pi_nd = np.asarray(self.pi_nd, dtype=float)

    def estimate(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def at(self, name: str, t: float) -> float:
        """Value of estimand ``name`` at the grid point closest to ``t``."""
        return float(getattr(self, name)[np.argmin(np.abs(self.grid - t))])

    def columns(self):
        cols = {"t": self.grid}
        for name in ESTIMANDS:
            cols[name] = getattr(self, name)
        if self.ci_lower is not None:
            for name in ESTIMANDS:
                cols[f"lo_{name}"] = self.ci_lower[name]
            for name in ESTIMANDS:
                cols[f"hi_{name}"] = self.ci_upper[name]
        return cols

    def to_csv(self, path) -> None:
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(cols))
            for row in zip(*cols.values()):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "SceCurve":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        head, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        col = {h: body[:, j] for j, h in enumerate(head)}
        lo = {n: col[f"lo_{n}"] for n in ESTIMANDS} if "lo_ad_sce1" in col else None
        hi = {n: col[f"hi_{n}"] for n in ESTIMANDS} if "hi_ad_sce1" in col else None
        return cls(col["t"], col["ad_sce1"], col["ad_sce2"], col["nd_sce2"], lo, hi)


@dataclass(frozen=True, eq=False)
class StepSurvival:
    """Right-continuous step survival: ``values[j] = S(times[j])``, ``S(0) = 1``."""

    times: np.ndarray
    values: np.ndarray

    def left(self) -> np.ndarray:
        return np.concatenate(([1.0], self.values[:-1]))

    def masses(self) -> np.ndarray:
        return self.left() - self.values


def stieltjes_sum(integrand, surv: StepSurvival, t: float = 0.0) -> float:
    """``sum_{s_j > t} integrand(s_j) * [S(s_j-) - S(s_j)]``.

    ``integrand`` is a callable of the jump times or an array aligned with
    ``surv.times``.
    """
    times = np.asarray(surv.times, dtype=float)
    f = integrand(times) if callable(integrand) else np.asarray(integrand, dtype=float)
    sel = times > t
    return float(np.sum(f[sel] * surv.masses()[sel]))


def _clamp(s):
    return np.clip(s, CLAMP_EPS, 1.0 - CLAMP_EPS)


def _tail_sums(terms, times, grid):
    """``sum_{s > t}`` of ``terms`` along the last axis for each grid point."""
    rc = np.concatenate([np.cumsum(terms[..., ::-1], axis=-1)[..., ::-1],
                         np.zeros(terms.shape[:-1] + (1,))], axis=-1)
    return rc[..., np.searchsorted(times, grid, side="right")]


def _arm_pieces(arm, z, grid, gamma=1.0):
    """Unnormalized stratum integrals of one arm for every row of ``z``.

    Returns ``(ad1_num, pi1, s2_grid, nd2_num, pi2)`` where ``ad1_num`` and
    ``nd2_num`` are the tail sums ``sum_{s>t} D_k m_k`` on ``grid``.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    cop = CopulaSpec(arm.family, arm.alpha)
    l1, l2 = arm.lambda01, arm.lambda02
    e1 = gamma * np.exp(z @ np.asarray(arm.beta1))[:, None]
    e2 = gamma * np.exp(z @ np.asarray(arm.beta2))[:, None]

    def pieces(own, other, e_own, e_other, which):
        lam_r = own.cumulative(own.times)
        lam_l = own.cumulative_left(own.times)
        s_l = np.exp(-e_own * lam_l)
        mass = s_l - np.exp(-e_own * lam_r)
        o_l = np.exp(-e_other * other.cumulative_left(own.times))
        if which == 1:
            d = cop.first_partials_interior(_clamp(s_l), _clamp(o_l))[0]
        else:
            d = cop.first_partials_interior(_clamp(o_l), _clamp(s_l))[1]
        terms = d * mass
        return _tail_sums(terms, own.times, grid), terms.sum(axis=-1)

    ad1_num, pi1 = pieces(l1, l2, e1, e2, 1)
    nd2_num, pi2 = pieces(l2, l1, e2, e1, 2)
    s2 = np.exp(-e2 * l2.cumulative(grid)[None, :])
    return ad1_num, pi1, s2, nd2_num, pi2


def stratum_quantities(fit, z, arm: int, grid) -> dict:
    """Stratum survivals and probabilities for one arm and one covariate vector.

    Returns
    -------
    dict with keys ``s1_ad``, ``s2_ad``, ``s2_nd`` (arrays on ``grid``) and
    ``pi_ad``, ``pi_nd`` (floats).  ``pi_ad`` is ``sum D_1 m_1``; the
    terminal-event AD survival is normalized by ``1 - pi_nd``, which agrees
    with ``pi_ad`` up to the plateau mass of the fitted survivals.
    """
    grid = np.asarray(grid, dtype=float)
    af = fit.arm(arm)
    ad1, pi1, s2, nd2, pi2 = _arm_pieces(af, np.atleast_2d(z), grid)
    pi1, pi2 = float(pi1[0]), float(pi2[0])
    if pi1 < PI_FLOOR or pi2 < PI_FLOOR or 1.0 - pi2 < PI_FLOOR:
        raise DegenerateStratumError(
            f"stratum probability below {PI_FLOOR} (pi_ad={pi1:.3g}, pi_nd={pi2:.3g})"
        )
    return {
        "s1_ad": ad1[0] / pi1,
        "s2_ad": (s2[0] - nd2[0]) / (1.0 - pi2),
        "s2_nd": nd2[0] / pi2,
        "pi_ad": pi1,
        "pi_nd": pi2,
    }


class _Accumulator:
    """Running numerators and denominators of the three weighted averages."""

    def __init__(self, g):
        self.num = {k: np.zeros(g) for k in ESTIMANDS}
        self.den = dict.fromkeys(ESTIMANDS, 0.0)
        self.pi_ad = np.zeros(2)
        self.pi_nd = np.zeros(2)
        self.cells = 0

    def add(self, p0, p1):
        a0, q0, s0, n0, r0 = p0
        a1, q1, s1, n1, r1 = p1
        # N_1 P_0 - N_0 P_1 equals P_0 P_1 (S^(1) - S^(0))
        self.num["ad_sce1"] += (a1 * q0[:, None] - a0 * q1[:, None]).sum(axis=0)
        self.den["ad_sce1"] += float(np.sum(q0 * q1))
        c0, c1 = 1.0 - r0, 1.0 - r1
        self.num["ad_sce2"] += ((s1 - n1) * c0[:, None] - (s0 - n0) * c1[:, None]).sum(axis=0)
        self.den["ad_sce2"] += float(np.sum(c0 * c1))
        self.num["nd_sce2"] += (n1 * r0[:, None] - n0 * r1[:, None]).sum(axis=0)
        self.den["nd_sce2"] += float(np.sum(r0 * r1))
        self.pi_ad += [q0.sum(), q1.sum()]
        self.pi_nd += [r0.sum(), r1.sum()]
        self.cells += q0.size

    def curve(self, grid) -> SceCurve:
        out = {}
        for k in ESTIMANDS:
            if self.den[k] < PI_FLOOR * max(self.cells, 1):
                raise DegenerateStratumError(f"all strata degenerate for {k}")
            out[k] = np.clip(self.num[k] / self.den[k], -1.0, 1.0)
        return SceCurve(grid, out["ad_sce1"], out["ad_sce2"], out["nd_sce2"],
                        pi_ad=self.pi_ad / self.cells, pi_nd=self.pi_nd / self.cells)


def _check_dims(fit, data):
    if data.p != np.asarray(fit.arm0.beta1).size:
        raise ValidationError(
            f"data has {data.p} covariates but the fit has {np.asarray(fit.arm0.beta1).size}"
        )


def _sce_over_gammas(fit, z, grid, gammas, chunk=256):
    acc = _Accumulator(grid.size)
    for g in gammas:
        for lo in range(0, z.shape[0], chunk):
            zz = z[lo:lo + chunk]
            acc.add(_arm_pieces(fit.arm0, zz, grid, g), _arm_pieces(fit.arm1, zz, grid, g))
    return acc.curve(grid)


def sce(fit, data, grid=None) -> SceCurve:
    """Plug-in estimates of AD-SCE1, AD-SCE2 and ND-SCE2.

    The covariate average runs over the pooled sample (both arms).
    """
    _check_dims(fit, data)
    grid = default_grid(data) if grid is None else np.asarray(grid, dtype=float)
    return _sce_over_gammas(fit, data.z, grid, [1.0])


def sce_frailty(fit, data, grid=None, sigma: float | None = None, n_gamma: int = 200,
                seed=0) -> SceCurve:
    """Frailty-averaged SCE curves under a mean-one gamma frailty of variance ``sigma``.

    ``sigma`` defaults to ``fit.sigma``; ``gamma`` draws are stratified
    quantiles of the gamma law (midpoint ranks, jittered by ``seed``), which
    keeps the Monte Carlo error small for modest ``n_gamma``.
    """
    from scipy import stats

    _check_dims(fit, data)
    sigma = fit.sigma if sigma is None else float(sigma)
    if sigma < 0:
        raise ValidationError("sigma must be nonnegative")
    grid = default_grid(data) if grid is None else np.asarray(grid, dtype=float)
    if sigma == 0:
        return sce(fit, data, grid)
    rng = np.random.Generator(np.random.PCG64(seed))
    q = (np.arange(n_gamma) + rng.uniform(size=n_gamma)) / n_gamma
    k = 1.0 / sigma
    gammas = stats.gamma.ppf(q, a=k, scale=1.0 / k)
    gammas = gammas[np.isfinite(gammas) & (gammas > 0)]
    return _sce_over_gammas(fit, data.z, grid, gammas)


def default_grid(data, size: int = 30) -> np.ndarray:
    """``size`` quantiles of ``X`` among subjects with an observed non-terminal event."""
    x1 = data.x[data.d1 == 1]
    if x1.size == 0:
        raise ValidationError("no observed non-terminal events to build a grid")
    return np.quantile(x1, np.arange(1, size + 1) / (size + 1))
