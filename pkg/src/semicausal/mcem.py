"""Monte Carlo EM for the shared gamma-frailty copula model.

Given a prespecified frailty variance ``sigma`` the frailty ``gamma`` of each
subject has a mean-one gamma law with shape and rate ``1/sigma``.  Both
event hazards of a subject are multiplied by the same ``gamma``.

E-step
    Metropolis-Hastings draws of ``gamma`` from each subject's posterior.
    The chains use a log-normal random walk and run for all subjects of an
    arm at once, so a bank of draws has shape ``(m, n)``.
M-step
    The Monte Carlo average of the complete-data log-likelihood over the
    bank is increased by the block steps of the no-frailty fitter: jump
    sizes by the frailty-weighted self-consistency update, then damped
    Newton on ``(beta1, beta2, alpha)``.

The Monte Carlo size grows geometrically, ``m_r = ceil(m0 * growth**r)``,
capped at ``m_cap``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .copula import CLAMP_EPS
from .errors import ConfigError, NumericError
from .likelihood import ArmData, ArmParams, loglik as q_value, subject_terms
from .npmle import ArmFit, ModelFit, _to_armfit, ascend, fit_arm
from . import npmle

MIN_ACCEPTANCE = 0.01
HESS_DRAWS = 200


@dataclass(frozen=True)
class FrailtySpec:
    """Frailty variance and Monte Carlo EM settings.

    Parameters
    ----------
    sigma : float
        Variance of the mean-one gamma frailty; ``0`` means no frailty.
    m0, m_growth, m_cap : MC sample size schedule.
    mh_step : float
        Upper bound on the random-walk scale on ``log gamma``; the chains
        start at ``min(mh_step, 2.4 * sqrt(sigma))``.
    n_burn : int
        Burn-in steps before each bank, after which the scale is adapted
        once toward 30-50% acceptance.
    max_iter, tol : stopping rule (largest change in ``(beta, alpha)``
        below ``tol`` on two consecutive iterations).
    seed : int
        Master seed of the chains.
    """

    sigma: float = 0.0
    m0: int = 50
    m_growth: float = 1.2
    m_cap: int = 2000
    mh_step: float = 0.5
    n_burn: int = 50
    max_iter: int = 100
    tol: float = 5e-3
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ConfigError("sigma must be nonnegative")
        if self.m0 < 1 or self.m_cap < self.m0 or self.m_growth < 1.0:
            raise ConfigError("invalid Monte Carlo schedule")
        if self.mh_step <= 0 or self.n_burn < 0:
            raise ConfigError("mh_step must be positive and n_burn nonnegative")

    def m_schedule(self, r: int) -> int:
        return int(min(self.m_cap, math.ceil(self.m0 * self.m_growth ** r)))

    def initial_scale(self) -> float:
        return float(min(self.mh_step, 2.4 * math.sqrt(self.sigma)))


def log_prior(gamma, sigma: float):
    """Log density of the mean-one gamma law up to a constant (``-inf`` off support)."""
    g = np.asarray(gamma, dtype=float)
    k = 1.0 / sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (k - 1.0) * np.log(g) - k * g
    return np.where(g > 0, out, -np.inf)


def _record_loglik(rec, arm: ArmFit, gamma):
    """Frailty-conditional log-likelihood of one subject at an array of ``gamma``."""
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    e1 = math.exp(float(rec.z @ arm.beta1))
    e2 = math.exp(float(rec.z @ arm.beta2))
    L1 = float(arm.lambda01.cumulative(rec.x))
    L2 = float(arm.lambda02.cumulative(rec.y))
    H1, H2 = g * L1 * e1, g * L2 * e2
    u = np.clip(np.exp(-H1), CLAMP_EPS, 1 - CLAMP_EPS)
    v = np.clip(np.exp(-H2), CLAMP_EPS, 1 - CLAMP_EPS)
    p = arm.copula().partials_interior(u, v)
    dstar = {(0, 0): p.c, (1, 1): p.c12, (1, 0): p.c1, (0, 1): p.c2}[(rec.d1, rec.d2)]
    with np.errstate(divide="ignore"):
        ll = np.log(dstar)
        if rec.d1:
            j = L1 - float(arm.lambda01.cumulative_left(rec.x))
            ll = ll + np.log(g * j * e1) - H1
        if rec.d2:
            j = L2 - float(arm.lambda02.cumulative_left(rec.y))
            ll = ll + np.log(g * j * e2) - H2
    return ll


def posterior_logdensity(subject, params: ArmFit, spec: FrailtySpec, gamma):
    """Unnormalized log posterior of a subject's frailty.

    Equals the frailty-conditional log-likelihood plus the log prior; the
    additive constant does not depend on ``gamma``.
    """
    g = np.asarray(gamma, dtype=float)
    out = np.full(np.shape(np.atleast_1d(g)), -np.inf)
    ok = np.atleast_1d(g) > 0
    if np.any(ok):
        gg = np.atleast_1d(g)[ok]
        out[ok] = _record_loglik(subject, params, gg) + log_prior(gg, spec.sigma)
    return out.reshape(np.shape(g)) if np.ndim(g) else float(out[0])


def _params(params, ad):
    return params if isinstance(params, ArmParams) else params.params_on(ad)


def observed_loglik(data, arm: int, params, sigma: float, step: float = 0.01,
                   chunk: int = 256) -> float:
    """Frailty-integrated log-likelihood of one arm.

    Integrates each subject's frailty-conditional likelihood against the
    mean-one gamma law of variance ``sigma`` with the trapezoid rule in
    ``u = log gamma``.  The integrand is smooth and decays exponentially in
    ``u``, so the rule converges geometrically; Gauss-Laguerre nodes in
    ``gamma`` are too coarse when a subject's likelihood is sharply peaked.
    Not used by the fitter; it checks that a Monte Carlo EM fit sits at a
    stationary point.
    """
    from scipy.special import gammaln, logsumexp

    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    ad = ArmData.from_dataset(data, arm)
    par = _params(params, ad)
    k = 1.0 / sigma
    # prior mass in u below u_lo is O(exp(k u_lo)); above u_hi it is O(exp(-k e^u_hi))
    u = np.arange(-45.0 / k, math.log(60.0 / k + 10.0), step)
    lp = k * math.log(k) - gammaln(k) + k * u - k * np.exp(u) + math.log(step)
    acc = np.full(ad.n, -np.inf)
    for s in range(0, u.size, chunk):
        g = np.exp(u[s:s + chunk])
        ll = subject_terms(ad, par, np.repeat(g[:, None], ad.n, axis=1), weights=False).ll
        acc = np.logaddexp(acc, logsumexp(ll + lp[s:s + chunk, None], axis=0))
    return float(acc.sum())


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def mh_sample_gamma(subject, params: ArmFit, spec: FrailtySpec, n_draws: int, seed=0):
    """Random-walk Metropolis-Hastings draws of one subject's frailty.

    Returns
    -------
    draws : ndarray of shape ``(n_draws,)``
    acceptance : float
        Acceptance rate over the kept draws.
    """
    rng = _rng(seed)
    target = lambda g: posterior_logdensity(subject, params, spec, g)  # noqa: E731
    lg, cur = 0.0, target(1.0)
    scale = spec.initial_scale()

    def run(k, lg, cur):
        out = np.empty(k)
        acc = 0
        for i in range(k):
            prop = lg + scale * rng.standard_normal()
            new = target(math.exp(prop))
            # log-normal proposal: Jacobian exp(prop - lg)
            if math.log(rng.uniform()) < new - cur + prop - lg:
                lg, cur = prop, new
                acc += 1
            out[i] = math.exp(lg)
        return out, acc / max(k, 1), lg, cur

    if spec.n_burn:
        _, a, lg, cur = run(spec.n_burn, lg, cur)
        scale = _adapt(scale, a)
    draws, acc, _, _ = run(int(n_draws), lg, cur)
    return draws, acc


def _adapt(scale, acc):
    if 0.3 <= acc <= 0.5:
        return scale
    return scale * float(np.clip(acc / 0.4, 0.25, 4.0)) if acc > 0 else scale * 0.25


def _subject_logpost(ad: ArmData, par: ArmParams, gamma, sigma):
    return subject_terms(ad, par, gamma, weights=False).ll + log_prior(gamma, sigma)


@dataclass
class ChainState:
    """Current position and proposal scale of the vectorized chains of one arm."""

    gamma: np.ndarray
    scale: float


def mh_bank(ad: ArmData, par: ArmParams, sigma: float, m: int, rng, state: ChainState,
            n_burn: int = 50):
    """Draw an ``(m, n)`` bank of posterior frailties, one chain per subject.

    Returns ``(bank, acceptance_per_subject, new_state)``.
    """
    lg = np.log(state.gamma)
    cur = _subject_logpost(ad, par, state.gamma, sigma)
    scale = state.scale

    def step(lg, cur):
        prop = lg + scale * rng.standard_normal(lg.size)
        new = _subject_logpost(ad, par, np.exp(prop), sigma)
        acc = np.log(rng.uniform(size=lg.size)) < new - cur + prop - lg
        return np.where(acc, prop, lg), np.where(acc, new, cur), acc

    if n_burn:
        nacc = np.zeros(ad.n)
        for _ in range(n_burn):
            lg, cur, a = step(lg, cur)
            nacc += a
        scale = _adapt(scale, float(nacc.mean() / n_burn))
    bank = np.empty((m, ad.n))
    nacc = np.zeros(ad.n)
    for i in range(m):
        lg, cur, a = step(lg, cur)
        nacc += a
        bank[i] = np.exp(lg)
    return bank, nacc / m, ChainState(np.exp(lg), scale)


@dataclass
class EStep:
    """Frailty-weighted expectations and the bank they came from."""

    e_gw1: np.ndarray
    e_gw2: np.ndarray
    bank: np.ndarray
    acceptance: np.ndarray
    mc_se1: np.ndarray
    mc_se2: np.ndarray
    state: ChainState | None = None


def _batch_se(x, n_batches: int = 10):
    m = x.shape[0]
    if m < 2 * n_batches:
        return x.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.zeros(x.shape[1:])
    b = m // n_batches
    means = x[: b * n_batches].reshape(n_batches, b, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


def e_step_expectations(data, arm: int, params, spec: FrailtySpec, m: int, seed=0,
                        state: ChainState | None = None, ad: ArmData | None = None) -> EStep:
    """Monte Carlo estimates of ``E[gamma w1 | O]`` and ``E[gamma w2 | O]`` per subject.

    With ``sigma = 0`` the frailty is identically one and the weights are
    returned exactly.

    Raises
    ------
    NumericError
        If the mean acceptance rate of the chains is below 1%.
    """
    ad = ArmData.from_dataset(data, arm) if ad is None else ad
    par = _params(params, ad)
    if spec.sigma == 0:
        bank = np.ones((1, ad.n))
        acc = np.ones(ad.n)
    else:
        rng = seed if isinstance(seed, np.random.Generator) else _rng(seed)
        state = state or ChainState(np.ones(ad.n), spec.initial_scale())
        bank, acc, state = mh_bank(ad, par, spec.sigma, int(m), rng, state, spec.n_burn)
        if acc.mean() < MIN_ACCEPTANCE:
            raise NumericError(
                f"frailty chains degenerate: mean acceptance {acc.mean():.4f} < {MIN_ACCEPTANCE}"
            )
    t = subject_terms(ad, par, bank)
    gw1, gw2 = bank * t.w1, bank * t.w2
    return EStep(gw1.mean(axis=0), gw2.mean(axis=0), bank, acc,
                 _batch_se(gw1), _batch_se(gw2), state)


def m_step(data, arm: int, estep: EStep, params, ad: ArmData | None = None,
           inner_iter: int = 1):
    """Increase the Monte Carlo Q function over the bank of ``estep``.

    The Newton curvature is estimated on the first ``HESS_DRAWS`` rows of
    the bank; gradient and line search use the whole bank, so ascent of the
    Monte Carlo Q function is unaffected.

    Returns ``(params, q_before, q_after)``; ``q_after >= q_before``.
    """
    ad = ArmData.from_dataset(data, arm) if ad is None else ad
    par = _params(params, ad)
    bank = None if np.all(estep.bank == 1.0) else estep.bank
    q0 = q_value(ad, par, bank)
    sub = None if bank is None else bank[:HESS_DRAWS]
    par, q1, _, _, _ = ascend(ad, par, bank, max_iter=inner_iter, tol=1e-6, hess_gamma=sub)
    return par, q0, q1


def fit_mcem_arm(data, arm: int, spec: FrailtySpec, family: str = "frank", rng=None,
                 start: ArmFit | None = None) -> ArmFit:
    ad = ArmData.from_dataset(data, arm)
    start = start or fit_arm(data, arm, family)
    par = start.params_on(ad)
    rng = rng or _rng(spec.seed)
    state = ChainState(np.ones(ad.n), spec.initial_scale())
    q_trace, m_used, acc_trace = [], [], []
    calm = 0
    converged = False
    r = 0
    for r in range(spec.max_iter):
        m = spec.m_schedule(r)
        es = e_step_expectations(data, arm, par, spec, m, rng, state, ad)
        state = es.state
        old = par.theta()
        par, q0, q1 = m_step(data, arm, es, par, ad)
        q_trace.append((q0, q1))
        m_used.append(m)
        acc_trace.append(float(es.acceptance.mean()))
        calm = calm + 1 if np.max(np.abs(par.theta() - old)) < spec.tol else 0
        if calm >= 2:
            converged = True
            break
    diag = {"m_schedule": m_used, "acceptance": acc_trace, "q_trace": q_trace,
            "mh_scale": state.scale, "start_loglik": start.loglik}
    return _to_armfit(ad, par, converged, q_trace[-1][1], r + 1, diag)


def fit_mcem(data, spec: FrailtySpec, family: str = "frank") -> ModelFit:
    """Fit both arms under a shared gamma frailty of variance ``spec.sigma``.

    Each arm starts from its no-frailty fit.  ``sigma = 0`` returns the
    no-frailty fit unchanged.  ``loglik`` of the returned arms is the final
    Monte Carlo Q value; the full MC diagnostics (sample sizes, acceptance
    rates, Q trace) sit in each arm's ``diagnostics``.
    """
    if spec.sigma == 0:
        return npmle.fit(data, family)
    seeds = np.random.SeedSequence(spec.seed).spawn(2)
    arms = [
        fit_mcem_arm(data, a, spec, family, np.random.Generator(np.random.PCG64(seeds[a])))
        for a in (0, 1)
    ]
    return ModelFit(arms[0], arms[1], float(spec.sigma), tuple(data.covariate_names),
                    {"frailty": {"m0": spec.m0, "m_growth": spec.m_growth,
                                 "m_cap": spec.m_cap, "seed": spec.seed}})
