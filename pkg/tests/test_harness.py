import numpy as np
import pytest

from semicausal import harness
from semicausal.causal import ESTIMANDS
from semicausal.datagen import SimSpec, simulate
from semicausal.errors import BootstrapUnstableError, ConfigError, DegenerateDataError


@pytest.fixture(scope="module")
def small():
    return simulate(SimSpec("Ex1", 300, 0.3, seed=31))


def test_derive_seed_is_stable_and_distinct():
    assert harness.derive_seed(1, 2, 3) == harness.derive_seed(1, 2, 3)
    assert harness.derive_seed(1, 2, 3) != harness.derive_seed(1, 3, 2)
    assert 0 <= harness.derive_seed(7) < 2**63


def test_stratified_resample_keeps_arm_sizes(small, rng):
    idx = harness.stratified_resample(small, rng)
    assert np.sum(small.a[idx] == 1) == np.sum(small.a == 1)
    assert idx.size == small.n


def test_bootstrap_is_deterministic(small):
    cfg = harness.BootstrapConfig(replicates=2, seed=5)
    a = harness.bootstrap(small, [2.0, 4.0], cfg)
    b = harness.bootstrap(small, [2.0, 4.0], cfg)
    for k in ESTIMANDS:
        np.testing.assert_array_equal(a.curve.ci_lower[k], b.curve.ci_lower[k])
    assert a.param_se == b.param_se


def test_identity_resample_gives_zero_width_bands(small):
    cfg = harness.BootstrapConfig(replicates=3, seed=1)
    ident = lambda b, rng: np.arange(small.n)  # noqa: E731
    res = harness.bootstrap(small, [2.0, 4.0], cfg, resample=ident)
    for k in ESTIMANDS:
        np.testing.assert_allclose(res.curve.ci_upper[k] - res.curve.ci_lower[k], 0.0, atol=1e-12)
        np.testing.assert_allclose(res.curve_se[k], 0.0, atol=1e-12)
    assert all(v < 1e-12 for v in res.param_se.values())


def test_normal_intervals_are_symmetric(small):
    cfg = harness.BootstrapConfig(replicates=3, seed=2, ci_method="normal")
    res = harness.bootstrap(small, [3.0], cfg)
    est = res.curve.ad_sce1
    np.testing.assert_allclose(res.curve.ci_upper["ad_sce1"] - est, est - res.curve.ci_lower["ad_sce1"])


def test_failed_resamples_raise_when_too_many(small):
    one_arm = lambda b, rng: np.flatnonzero(small.a == 0)  # noqa: E731
    with pytest.raises(BootstrapUnstableError):
        harness.bootstrap(small, [3.0], harness.BootstrapConfig(replicates=4), resample=one_arm)


def test_config_checks():
    with pytest.raises(ConfigError):
        harness.BootstrapConfig(replicates=1)
    with pytest.raises(ConfigError):
        harness.BootstrapConfig(ci_method="bca")
    with pytest.raises(ConfigError):
        harness.run_study(SimSpec("Ex1", 100), 1)


def test_summarize_by_hand():
    recs = [{"b": {"est": 1.1, "se": 0.2, "lo": 0.8, "hi": 1.4}},
            {"b": {"est": 0.7, "se": 0.4, "lo": 0.5, "hi": 0.9}}]
    row = harness.summarize(recs, {"b": 1.0})["b"]
    assert row["mean_bias"] == pytest.approx(-0.1)
    assert row["mcsd"] == pytest.approx(np.std([1.1, 0.7], ddof=1))
    assert row["ase"] == pytest.approx(0.3)
    assert row["cp"] == 0.5 and row["n_ok"] == 2


def test_small_study_is_complete_and_reaggregates(tmp_path):
    spec = SimSpec("Ex1", 250, 0.3, seed=3)
    cfg = harness.BootstrapConfig(replicates=2)
    s = harness.run_study(spec, 2, cfg, n_mc=20_000)
    assert not s.failures
    for name, row in s.rows.items():
        assert np.isfinite(row["mean_bias"]) and row["mcsd"] >= 0, name
        assert 0 <= row["cp"] <= 1
    harness.write_replicates(s, tmp_path / "reps.csv")
    again = harness.summarize(harness.read_replicates(tmp_path / "reps.csv"),
                              {k: r["truth"] for k, r in s.rows.items()})
    for name, row in s.rows.items():
        for col in ("mean_bias", "mcsd", "ase", "cp"):
            assert again[name][col] == row[col], (name, col)
    s.to_csv(tmp_path / "summary.csv")
    assert (tmp_path / "summary.csv").read_text().startswith("name,truth,mean_bias,mcsd,ase,cp,n_ok")


def test_fit_model_dispatch(small):
    assert harness.fit_model(small).sigma == 0.0
    with pytest.raises(DegenerateDataError):
        harness.fit_model(small.arm(0))
