import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from semicausal import npmle
from semicausal.copula import CopulaSpec
from semicausal.datagen import SimSpec, simulate
from semicausal.errors import DegenerateDataError, ValidationError
from semicausal.likelihood import (
    ArmData,
    ArmParams,
    apply_barrier,
    fd_hessian,
    gradient,
    jump_update,
    loglik,
    subject_terms,
)


def frank_mp(u, v, a):
    a = mpmath.mpf(a)
    return -mpmath.log(1 + mpmath.expm1(-a * u) * mpmath.expm1(-a * v) / mpmath.expm1(-a)) / a


# five subjects covering the four censoring patterns; event times 1, 2 (T1) and 3 (T2)
X = np.array([1.0, 2.0, 0.5, 1.5, 2.5])
Y = np.array([3.0, 4.0, 3.0, 1.5, 2.5])
D1 = np.array([1, 1, 0, 0, 0])
D2 = np.array([1, 0, 1, 0, 0])
Z = np.array([[0.3], [-1.0], [0.5], [0.0], [1.2]])


def hand_loglik(alpha, b1, b2, j1, j2):
    total = mpmath.mpf(0)
    for x, y, d1, d2, z in zip(X, Y, D1, D2, Z[:, 0]):
        L1 = sum(j for t, j in zip([1.0, 2.0], j1) if t <= x)
        L2 = sum(j for t, j in zip([3.0], j2) if t <= y)
        H1, H2 = L1 * mpmath.e ** (b1 * z), L2 * mpmath.e ** (b2 * z)
        u, v = mpmath.e ** -H1, mpmath.e ** -H2
        dstar = mpmath.diff(lambda s, r: frank_mp(s, r, alpha), (u, v), (d1, d2))
        total += mpmath.log(dstar)
        if d1:
            total += mpmath.log(dict(zip([1.0, 2.0], j1))[x] * mpmath.e ** (b1 * z)) - H1
        if d2:
            total += mpmath.log(dict(zip([3.0], j2))[y] * mpmath.e ** (b2 * z)) - H2
    return float(total)


def test_five_subject_loglik_by_hand():
    ad = ArmData(X, Y, D1, D2, Z)
    np.testing.assert_array_equal(ad.t1, [1.0, 2.0])
    np.testing.assert_array_equal(ad.t2, [3.0])
    par = ArmParams(2.5, np.array([0.4]), np.array([-0.3]), np.array([0.2, 0.35]), np.array([0.5]))
    assert loglik(ad, par) == pytest.approx(hand_loglik(2.5, 0.4, -0.3, [0.2, 0.35], [0.5]), rel=1e-10)


@pytest.fixture(scope="module")
def arm_setup():
    data = simulate(SimSpec("Ex1", 300, 0.4, seed=21))
    ad = ArmData.from_dataset(data, 0)
    par, _ = npmle.initial_params(ad)
    return data, ad, par


def test_independence_factorizes_into_two_cox_likelihoods(arm_setup):
    _, ad, par = arm_setup
    p = ArmParams(1e-9, par.beta1, par.beta2, par.jumps1, par.jumps2)
    t = subject_terms(ad, p)
    eta1, eta2 = ad.z @ p.beta1, ad.z @ p.beta2
    j1 = np.concatenate(([1.0], p.jumps1))[ad.k1]
    j2 = np.concatenate(([1.0], p.jumps2))[ad.k2]
    ref = ad.d1 * (np.log(j1) + eta1) - t.H1 + ad.d2 * (np.log(j2) + eta2) - t.H2
    np.testing.assert_allclose(t.ll, ref, atol=1e-7)
    # and the EM weights reduce to one, the ordinary Cox weights
    np.testing.assert_allclose(t.w1, 1.0, atol=1e-7)
    np.testing.assert_allclose(t.w2, 1.0, atol=1e-7)


def test_gradient_matches_finite_differences(arm_setup):
    _, ad, par = arm_setup
    th = par.theta()
    g = gradient(ad, par)
    for j in range(th.size):
        e = np.zeros(th.size)
        e[j] = 1e-6
        fd = (loglik(ad, par.with_theta(th + e)) - loglik(ad, par.with_theta(th - e))) / 2e-6
        assert g[j] == pytest.approx(fd, rel=1e-4, abs=1e-3)
    h = fd_hessian(ad, par)
    np.testing.assert_allclose(h, h.T)


def test_gradient_with_frailty_bank_matches_finite_differences(arm_setup, rng):
    _, ad, par = arm_setup
    bank = rng.gamma(2.0, 0.5, size=(7, ad.n))
    th = par.theta()
    g = gradient(ad, par, bank)
    for j in range(th.size):
        e = np.zeros(th.size)
        e[j] = 1e-6
        fd = (loglik(ad, par.with_theta(th + e), bank) - loglik(ad, par.with_theta(th - e), bank)) / 2e-6
        assert g[j] == pytest.approx(fd, rel=1e-4, abs=1e-3)


def test_jump_update_is_a_fixed_point_of_the_fit(arm_setup):
    data, ad, _ = arm_setup
    fit = npmle.fit_arm(data, 0)
    par = fit.params_on(ad)
    j1, j2 = jump_update(ad, par)
    np.testing.assert_allclose(j1, par.jumps1, rtol=2e-3)
    np.testing.assert_allclose(j2, par.jumps2, rtol=2e-3)
    # score in log jump sizes vanishes
    k = len(par.jumps1) // 2
    for s in (1e-5, -1e-5):
        jj = par.jumps1.copy()
        jj[k] *= np.exp(s)
        assert loglik(ad, par.with_jumps(jj, par.jumps2)) <= fit.loglik + 1e-6


def test_fit_improves_on_initializer_and_converges(ex1_small, ex1_fit):
    assert ex1_fit.converged
    for a in (0, 1):
        init = npmle.initialize(ex1_small, a)
        arm = ex1_fit.arm(a)
        assert arm.loglik >= init.loglik
        assert npmle.loglik(ex1_small, a, arm) == pytest.approx(arm.loglik)
        assert abs(arm.tau - 0.3) < 0.15
        tr = arm.diagnostics["loglik_trace"]
        assert np.all(np.diff(tr) >= -1e-8)


def test_initializer_falls_back_without_doubly_observed_pairs():
    data = simulate(SimSpec("Ex1", 600, 0.3, seed=4))
    ad = ArmData.from_dataset(data, 1)
    pick = np.random.default_rng(0).choice(np.flatnonzero(~ad.case11), 120, replace=False)
    keep = np.sort(np.concatenate([np.flatnonzero(ad.case11)[:5], pick]))
    few = ArmData(ad.x[keep], ad.y[keep], ad.d1[keep], ad.d2[keep], ad.z[keep])
    _, diag = npmle.initial_params(few)
    assert diag["fallback"] and diag["empirical_tau"] is None


@given(st.floats(-2e-4, 2e-4))
def test_barrier_keeps_frank_alpha_away_from_zero(a):
    th = apply_barrier(np.array([0.1, 0.2, a]), "frank")
    assert abs(th[-1]) >= 1e-4
    assert apply_barrier(np.array([0.1, -3.0]), "clayton")[-1] > 0


def test_degenerate_inputs():
    data = simulate(SimSpec("Ex1", 50, 0.3, seed=4))
    with pytest.raises(DegenerateDataError):
        npmle.fit(data.subset(np.flatnonzero(data.a == 0)))
    with pytest.raises(DegenerateDataError):
        ArmData(X, Y, np.zeros(5), D2, Z)
    with pytest.raises(ValidationError):
        npmle.loglik(data, 0, ArmParams(1.0, np.zeros(3), np.zeros(3), np.ones(1), np.ones(1)))


def test_clayton_fit_runs():
    data = simulate(SimSpec("Ex1", 300, 0.4, seed=8))
    fit = npmle.fit(data, "clayton", max_iter=60)
    assert fit.arm0.family == "clayton" and fit.arm0.alpha > 0
    assert np.isfinite(fit.arm0.loglik)
    assert CopulaSpec("clayton", fit.arm0.alpha).tau() > 0


def test_jump_update_agrees_with_direct_maximization_over_jump_sizes():
    # with alpha and betas held fixed, iterating the self-consistency update
    # must land on the maximizer of the likelihood in the jump sizes
    data = simulate(SimSpec("Ex1", 80, 0.4, seed=31))
    ad = ArmData.from_dataset(data, 0)
    par, _ = npmle.initial_params(ad)
    cur = loglik(ad, par)
    for _ in range(3000):
        new, val, ok = npmle.jump_step(ad, par, cur)
        if not ok or val - cur < 1e-13:
            par, cur = new, val
            break
        par, cur = new, val
    k1 = par.jumps1.size
    start = np.log(np.concatenate([par.jumps1, par.jumps2])) + 0.3

    def neg(lj):
        return -loglik(ad, par.with_jumps(np.exp(lj[:k1]), np.exp(lj[k1:])))

    from scipy import optimize

    ref = optimize.minimize(neg, start, method="BFGS", options={"gtol": 1e-8})
    assert -ref.fun == pytest.approx(cur, abs=1e-6)
    np.testing.assert_allclose(np.exp(ref.x[:k1]), par.jumps1, rtol=5e-3)
    np.testing.assert_allclose(np.exp(ref.x[k1:]), par.jumps2, rtol=5e-3)
