"""Simulation scenarios Ex1-Ex4 and a brute-force oracle for the causal estimands.

Random numbers come from ``numpy.random.Generator(PCG64(seed))`` and are drawn
in a fixed order: covariates, treatment, frailty (Ex4), the four copula
uniforms ``(U0, W0, U1, W1)``, then censoring times.  The same seed therefore
gives bit-identical data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .copula import CopulaSpec, alpha_from_tau
from .data import Dataset
from .errors import ConfigError, DegenerateStratumError
from .survival import WeibullBaseline, weibull_invert

SCENARIOS = ("Ex1", "Ex2", "Ex3", "Ex4")

DEFAULT_CENSOR_BOUND = {"Ex1": 45.0, "Ex2": 16.0, "Ex3": 16.0, "Ex4": 12.0}


@dataclass(frozen=True)
class ArmTruth:
    lambda01: WeibullBaseline
    beta1: tuple
    lambda02: WeibullBaseline
    beta2: tuple


_EX1 = (
    ArmTruth(WeibullBaseline(3.5, 5.0), (1.0, 2.0), WeibullBaseline(4.0, 5.5), (1.0, 2.0)),
    ArmTruth(WeibullBaseline(5.5, 6.0), (0.0, 2.0), WeibullBaseline(5.8, 6.5), (0.5, 2.0)),
)
_EX2 = (
    ArmTruth(
        WeibullBaseline(3.0, 4.0), (2 / 3, 2 / 3, 2 / 3, 0.0, 0.0, 0.0),
        WeibullBaseline(3.4, 4.2), (0.0, 0.0, 0.0, 2.0, 2.0, 2.0),
    ),
    ArmTruth(
        WeibullBaseline(4.0, 5.0), (1.0, 1.0, 1.0, 0.0, 0.0, 0.0),
        WeibullBaseline(4.5, 5.2), (0.0, 0.0, 0.0, 1.0, 1.0, 1.0),
    ),
)
_EX4 = (
    ArmTruth(WeibullBaseline(3.0, 4.0), (2.0, 0.0), WeibullBaseline(3.4, 4.2), (0.0, 2.0)),
    ArmTruth(WeibullBaseline(4.0, 5.0), (1.0, 0.0), WeibullBaseline(4.5, 5.2), (0.0, 1.0)),
)

TRUTHS = {"Ex1": _EX1, "Ex2": _EX2, "Ex3": _EX1, "Ex4": _EX4}


@dataclass(frozen=True)
class SimSpec:
    """Configuration of one simulated data set.

    ``censor_bound`` defaults to the scenario's value (Ex1: 45, the
    low-censoring design; Ex2/Ex3: 16; Ex4: 12).
    """

    scenario: str = "Ex1"
    n: int = 1000
    tau: float = 0.3
    censor_bound: float | None = None
    sigma: float = 0.0
    seed: int = 0
    family: str = "frank"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if int(self.n) <= 0:
            raise ConfigError("n must be positive")
        if not -1.0 < float(self.tau) < 1.0:
            raise ConfigError("tau must lie in (-1, 1)")
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if self.sigma > 0 and self.scenario != "Ex4":
            raise ConfigError("a frailty variance is only defined for scenario Ex4")
        if self.censor_bound is None:
            object.__setattr__(self, "censor_bound", DEFAULT_CENSOR_BOUND[self.scenario])
        if self.censor_bound <= 0:
            raise ConfigError("censor_bound must be positive")

    @property
    def truths(self):
        return TRUTHS[self.scenario]

    @property
    def p(self) -> int:
        return 6 if self.scenario == "Ex2" else 2

    def copula(self) -> CopulaSpec:
        return CopulaSpec(self.family, alpha_from_tau(self.family, self.tau))


@dataclass(frozen=True, eq=False)
class PotentialOutcomes:
    """Both-world event times; ``gamma`` is all ones outside Ex4."""

    t1: np.ndarray  # (n, 2): column a holds T1(a)
    t2: np.ndarray
    z: np.ndarray
    gamma: np.ndarray


def _draw_covariates(rng, scenario, n):
    if scenario == "Ex2":
        return rng.standard_normal((n, 6))
    z1 = rng.uniform(-1.0, 1.0, n)
    z2 = rng.standard_normal(n)
    return np.column_stack([z1, z2])


def _draw_potential(rng, spec: SimSpec, n: int):
    z = _draw_covariates(rng, spec.scenario, n)
    if spec.scenario == "Ex3":
        a = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-z[:, 0]))).astype(np.int64)
    else:
        a = (rng.uniform(size=n) < 0.5).astype(np.int64)
    if spec.scenario == "Ex4" and spec.sigma > 0:
        k = 1.0 / spec.sigma
        gamma = rng.gamma(shape=k, scale=1.0 / k, size=n)
    else:
        gamma = np.ones(n)
    uw = rng.uniform(size=(n, 4))
    # uniforms of exactly 0 are impossible in PCG64's double generator but
    # guard the open-interval contract anyway
    uw = np.clip(uw, 1e-300, 1.0 - 1e-16)
    cop = spec.copula()
    t1 = np.empty((n, 2))
    t2 = np.empty((n, 2))
    lg = np.log(gamma)
    for arm, truth in enumerate(spec.truths):
        u = uw[:, 2 * arm]
        v = cop.conditional_inverse(uw[:, 2 * arm + 1], u)
        v = np.clip(v, 1e-300, 1.0)
        t1[:, arm] = weibull_invert(truth.lambda01, u, z @ np.array(truth.beta1) + lg)
        t2[:, arm] = weibull_invert(truth.lambda02, v, z @ np.array(truth.beta2) + lg)
    return z, a, gamma, t1, t2


def simulate(spec: SimSpec, return_potential: bool = False):
    """Simulate an observed data set (and optionally the potential outcomes).

    Returns
    -------
    Dataset, or ``(Dataset, PotentialOutcomes)`` when ``return_potential``.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n = int(spec.n)
    z, a, gamma, t1, t2 = _draw_potential(rng, spec, n)
    c = rng.uniform(0.0, spec.censor_bound, n)
    rows = np.arange(n)
    T1 = t1[rows, a]
    T2 = t2[rows, a]
    x = np.minimum(np.minimum(T1, T2), c)
    y = np.minimum(T2, c)
    # ties T1 == T2 count as terminal first
    d1 = ((T1 < T2) & (T1 <= c)).astype(np.int64)
    d2 = (T2 <= c).astype(np.int64)
    data = Dataset(x, y, d1, d2, a, z)
    if return_potential:
        return data, PotentialOutcomes(t1, t2, z, gamma)
    return data


def potential_outcomes(spec: SimSpec, n: int, seed=None) -> PotentialOutcomes:
    """Uncensored both-world outcomes for ``n`` subjects."""
    seed = spec.seed if seed is None else seed
    rng = np.random.Generator(np.random.PCG64(seed))
    z, _, gamma, t1, t2 = _draw_potential(rng, spec, n)
    return PotentialOutcomes(t1, t2, z, gamma)


def true_sce(spec: SimSpec, grid, n_mc: int = 200_000, seed=None):
    """Monte Carlo truth of AD-SCE1, AD-SCE2 and ND-SCE2 on ``grid``.

    Subjects are classified into the always-diseased stratum
    ``{T1(0) <= T2(0), T1(1) <= T2(1)}`` and the never-diseased stratum
    ``{T1(0) >= T2(0), T1(1) >= T2(1)}``; the estimands are differences of
    empirical stratum-conditional survival probabilities ``P(T >= t)``.
    """
    from .causal import SceCurve

    grid = np.asarray(grid, dtype=float)
    po = potential_outcomes(spec, n_mc, seed=spec.seed + 7919 if seed is None else seed)
    ad = (po.t1[:, 0] <= po.t2[:, 0]) & (po.t1[:, 1] <= po.t2[:, 1])
    nd = (po.t1[:, 0] >= po.t2[:, 0]) & (po.t1[:, 1] >= po.t2[:, 1])
    if ad.sum() == 0 or nd.sum() == 0:
        raise DegenerateStratumError(
            f"empty stratum in oracle sample (AD: {int(ad.sum())}, ND: {int(nd.sum())})"
        )

    def surv(t, mask):
        tt = np.sort(t[mask])
        return 1.0 - np.searchsorted(tt, grid, side="left") / tt.size

    ad1 = surv(po.t1[:, 1], ad) - surv(po.t1[:, 0], ad)
    ad2 = surv(po.t2[:, 1], ad) - surv(po.t2[:, 0], ad)
    nd2 = surv(po.t2[:, 1], nd) - surv(po.t2[:, 0], nd)
    return SceCurve(
        grid=grid, ad_sce1=ad1, ad_sce2=ad2, nd_sce2=nd2,
        pi_ad=np.array([ad.mean(), ad.mean()]), pi_nd=np.array([nd.mean(), nd.mean()]),
    )


def true_model_fit(spec: SimSpec, n_grid: int = 4000, horizon: float = 3.0):
    """Generating truths of the scenario as a :class:`~semicausal.npmle.ModelFit`.

    The Weibull baselines are discretized on ``n_grid`` equally spaced points
    up to ``horizon`` times each scale, which carries essentially all the
    mass for the scenario's covariate range.  Useful for checking the causal
    formulas separately from estimation error.
    """
    from .npmle import ArmFit, ModelFit
    from .survival import StepHazard

    alpha = spec.copula().alpha
    arms = []
    for truth in spec.truths:
        hz = []
        for w in (truth.lambda01, truth.lambda02):
            grid = np.linspace(horizon * w.scale / n_grid, horizon * w.scale, n_grid)
            hz.append(StepHazard.from_function(w.cumulative, grid))
        arms.append(ArmFit(alpha, truth.beta1, truth.beta2, hz[0], hz[1], True,
                           family=spec.family))
    return ModelFit(arms[0], arms[1], spec.sigma)
