"""Bootstrap inference and Monte Carlo simulation studies.

Every random quantity is derived from one integer seed through
:class:`numpy.random.SeedSequence`, so results do not depend on the number
of worker processes or the order in which tasks finish.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import causal, mcem, npmle
from .causal import ESTIMANDS, SceCurve
from .datagen import SimSpec, simulate, true_sce
from .errors import BootstrapUnstableError, ConfigError, SemicausalError

MAX_FAILURE_RATE = 0.2
Z95 = 1.959963984540054


@dataclass(frozen=True)
class BootstrapConfig:
    """Bootstrap settings.

    ``parallel_width > 1`` spreads resamples over worker processes; the
    output is identical to the sequential run.
    """

    replicates: int = 100
    seed: int = 0
    ci_method: str = "percentile"
    parallel_width: int = 1
    n_gamma: int = 200

    def __post_init__(self):
        if self.replicates < 2:
            raise ConfigError("the bootstrap needs at least 2 replicates")
        if self.ci_method not in ("percentile", "normal"):
            raise ConfigError(f"unknown ci_method {self.ci_method!r}")
        if self.parallel_width < 1:
            raise ConfigError("parallel_width must be positive")


def derive_seed(seed: int, *path: int) -> int:
    """A 63-bit integer seed derived from ``seed`` and a task path."""
    ss = np.random.SeedSequence([int(seed), *[int(p) for p in path]])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def fit_model(data, sigma: float = 0.0, family: str = "frank",
              frailty: mcem.FrailtySpec | None = None, seed: int = 0):
    """No-frailty fit when ``sigma == 0``, Monte Carlo EM otherwise."""
    if frailty is None:
        frailty = mcem.FrailtySpec(sigma=sigma, seed=seed)
    if frailty.sigma == 0:
        return npmle.fit(data, family)
    return mcem.fit_mcem(data, frailty, family)


def estimate_sce(fit, data, grid, n_gamma: int = 200, seed: int = 0) -> SceCurve:
    if fit.sigma > 0:
        return causal.sce_frailty(fit, data, grid, fit.sigma, n_gamma, seed)
    return causal.sce(fit, data, grid)


def param_vector(fit) -> dict:
    """Named scalar parameters: per arm ``tau``, ``alpha`` and every coefficient."""
    out = {}
    for a in (0, 1):
        arm = fit.arm(a)
        out[f"tau{a}"] = arm.tau
        out[f"alpha{a}"] = arm.alpha
        for j, name in enumerate(fit.covariate_names or range(arm.beta1.size)):
            out[f"beta1_{name}_{a}"] = float(arm.beta1[j])
            out[f"beta2_{name}_{a}"] = float(arm.beta2[j])
    return out


def stratified_resample(data, rng) -> np.ndarray:
    """Indices of a with-replacement resample that keeps both arm sizes."""
    parts = []
    for a in (0, 1):
        idx = np.flatnonzero(data.a == a)
        parts.append(rng.choice(idx, size=idx.size, replace=True))
    return np.sort(np.concatenate(parts))


@dataclass
class BootstrapResult:
    """Point estimates with bootstrap bands and standard errors."""

    curve: SceCurve
    params: dict
    param_se: dict
    param_ci: dict
    curve_se: dict
    draws: np.ndarray  # (B_ok, 3, G)
    param_draws: dict
    failures: int
    replicates: int


def _boot_task(args):
    data, grid, sigma, family, b, seed, n_gamma, resample = args
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, 1, b)))
    idx = resample(b, rng) if resample is not None else stratified_resample(data, rng)
    sub = data.subset(idx)
    try:
        fit = fit_model(sub, sigma, family, seed=derive_seed(seed, 2, b))
        curve = estimate_sce(fit, sub, grid, n_gamma, derive_seed(seed, 3, b))
    except (SemicausalError, FloatingPointError, np.linalg.LinAlgError):
        return None
    return np.stack([curve.estimate(k) for k in ESTIMANDS]), param_vector(fit)


def _map(fn, tasks, width):
    if width <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=width) as ex:
        return list(ex.map(fn, tasks))


def _interval(est, draws, method):
    if method == "percentile":
        return np.quantile(draws, 0.025, axis=0), np.quantile(draws, 0.975, axis=0)
    se = draws.std(axis=0, ddof=1)
    return est - Z95 * se, est + Z95 * se


def bootstrap(data, grid, cfg: BootstrapConfig, frailty: mcem.FrailtySpec | None = None,
              family: str = "frank", fit=None, resample=None) -> BootstrapResult:
    """Nonparametric bootstrap of the SCE curves and model parameters.

    Subjects are resampled with replacement within each arm.  Resamples
    whose fit fails are dropped and counted.

    Parameters
    ----------
    resample : callable ``(b, rng) -> indices``, optional
        Replaces the stratified resampler (used by tests).

    Raises
    ------
    BootstrapUnstableError
        More than 20% of the resamples failed.
    """
    grid = np.asarray(grid, dtype=float)
    sigma = 0.0 if frailty is None else frailty.sigma
    fit = fit or fit_model(data, sigma, family, frailty)
    est = estimate_sce(fit, data, grid, cfg.n_gamma, derive_seed(cfg.seed, 0))
    tasks = [(data, grid, sigma, family, b, cfg.seed, cfg.n_gamma, resample)
             for b in range(cfg.replicates)]
    out = _map(_boot_task, tasks, cfg.parallel_width)
    ok = [o for o in out if o is not None]
    failures = len(out) - len(ok)
    if failures > MAX_FAILURE_RATE * cfg.replicates or len(ok) < 2:
        raise BootstrapUnstableError(f"{failures} of {cfg.replicates} bootstrap fits failed")
    draws = np.stack([o[0] for o in ok])
    pdraws = {k: np.array([o[1][k] for o in ok]) for k in ok[0][1]}
    point = np.stack([est.estimate(k) for k in ESTIMANDS])
    lo, hi = _interval(point, draws, cfg.ci_method)
    curve = replace(
        est,
        ci_lower={k: lo[i] for i, k in enumerate(ESTIMANDS)},
        ci_upper={k: hi[i] for i, k in enumerate(ESTIMANDS)},
    )
    params = param_vector(fit)
    pse = {k: float(v.std(ddof=1)) for k, v in pdraws.items()}
    pci = {}
    for k, v in pdraws.items():
        l, h = _interval(np.array(params[k]), v, cfg.ci_method)
        pci[k] = (float(l), float(h))
    cse = {k: draws[:, i].std(axis=0, ddof=1) for i, k in enumerate(ESTIMANDS)}
    return BootstrapResult(curve, params, pse, pci, cse, draws, pdraws, failures, cfg.replicates)


# ---------------------------------------------------------------------------
# simulation studies


def true_params(spec: SimSpec) -> dict:
    """Parameter truths of a scenario keyed like :func:`param_vector`."""
    out = {}
    alpha = spec.copula().alpha
    names = [f"z{j + 1}" for j in range(spec.p)]
    for a, truth in enumerate(spec.truths):
        out[f"tau{a}"] = float(spec.tau)
        out[f"alpha{a}"] = alpha
        for j, name in enumerate(names):
            out[f"beta1_{name}_{a}"] = float(truth.beta1[j])
            out[f"beta2_{name}_{a}"] = float(truth.beta2[j])
    return out


@dataclass
class StudySummary:
    """One row per parameter and per ``(estimand, t)``.

    Columns: ``truth``, ``mean_bias``, ``mcsd``, ``ase`` (mean bootstrap
    standard error), ``cp`` (coverage of the 95% bootstrap interval) and
    ``n_ok`` (replicates that contributed).
    """

    rows: dict
    replicates: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def row(self, name: str) -> dict:
        return self.rows[name]

    def to_csv(self, path) -> None:
        cols = ["name", "truth", "mean_bias", "mcsd", "ase", "cp", "n_ok"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for name, r in self.rows.items():
                w.writerow([name] + [repr(float(r[c])) for c in cols[1:-1]] + [int(r["n_ok"])])


def summarize(records: list, truths: dict) -> dict:
    """Aggregate per-replicate records into summary rows.

    Each record maps ``name -> {"est", "se", "lo", "hi"}`` (``se``, ``lo``
    and ``hi`` may be ``nan``).  Summation runs in record order.
    """
    rows = {}
    for name, truth in truths.items():
        est = np.array([r[name]["est"] for r in records if name in r])
        se = np.array([r[name]["se"] for r in records if name in r])
        lo = np.array([r[name]["lo"] for r in records if name in r])
        hi = np.array([r[name]["hi"] for r in records if name in r])
        n = est.size
        has_ci = n > 0 and np.all(np.isfinite(lo))
        rows[name] = {
            "truth": float(truth),
            "mean_bias": float(est.mean() - truth) if n else math.nan,
            "mcsd": float(est.std(ddof=1)) if n > 1 else math.nan,
            "ase": float(se.mean()) if n and np.all(np.isfinite(se)) else math.nan,
            "cp": float(np.mean((lo <= truth) & (truth <= hi))) if has_ci else math.nan,
            "n_ok": n,
        }
    return rows


def _study_task(args):
    spec, r, eval_times, cfg, sigma = args
    seed = derive_seed(spec.seed, 10, r)
    rep_spec = replace(spec, seed=seed)
    data = simulate(rep_spec)
    rec = {"rep": r, "seed": seed}
    try:
        if cfg is None:
            fit = fit_model(data, sigma, spec.family, seed=derive_seed(seed, 1))
            curve = estimate_sce(fit, data, eval_times, seed=derive_seed(seed, 2))
            pse = pci = cse = None
            lo = hi = None
        else:
            fr = mcem.FrailtySpec(sigma=sigma, seed=derive_seed(seed, 1)) if sigma > 0 else None
            bcfg = replace(cfg, seed=derive_seed(seed, 3), parallel_width=1)
            res = bootstrap(data, eval_times, bcfg, fr, spec.family)
            fit_params, curve = res.params, res.curve
            pse, pci, cse = res.param_se, res.param_ci, res.curve_se
            lo, hi = curve.ci_lower, curve.ci_upper
            rec["boot_failures"] = res.failures
            fit = None
    except SemicausalError as exc:
        rec["error"] = f"{exc.category}: {exc}"
        return rec
    params = param_vector(fit) if fit is not None else fit_params
    for k, v in params.items():
        rec[k] = {"est": v, "se": pse[k] if pse else math.nan,
                  "lo": pci[k][0] if pci else math.nan, "hi": pci[k][1] if pci else math.nan}
    for name in ESTIMANDS:
        for j, t in enumerate(eval_times):
            rec[f"{name}@{t:g}"] = {
                "est": float(curve.estimate(name)[j]),
                "se": float(cse[name][j]) if cse else math.nan,
                "lo": float(lo[name][j]) if lo else math.nan,
                "hi": float(hi[name][j]) if hi else math.nan,
            }
    return rec


def run_study(spec: SimSpec, reps: int, cfg: BootstrapConfig | None = None,
              eval_times=(3.0, 6.0), n_mc: int = 200_000, parallel_width: int = 1,
              progress=None) -> StudySummary:
    """Repeat simulate, fit, SCE (and bootstrap when ``cfg`` is given).

    Replicate ``r`` uses data seed ``derive_seed(spec.seed, 10, r)``.  The
    model is fitted with the scenario's true frailty variance ``spec.sigma``.
    Truths for the SCEs come from :func:`~semicausal.datagen.true_sce`.
    Failed replicates are excluded and listed in ``failures``.
    """
    if reps < 2:
        raise ConfigError("a study needs at least 2 replicates")
    eval_times = np.asarray(eval_times, dtype=float)
    truths = true_params(spec)
    tr = true_sce(spec, eval_times, n_mc)
    for name in ESTIMANDS:
        for j, t in enumerate(eval_times):
            truths[f"{name}@{t:g}"] = float(tr.estimate(name)[j])
    tasks = [(spec, r, eval_times, cfg, spec.sigma) for r in range(reps)]
    if parallel_width > 1:
        records = _map(_study_task, tasks, parallel_width)
    else:
        records = []
        for t in tasks:
            records.append(_study_task(t))
            if progress is not None:
                progress(len(records), reps)
    ok = [r for r in records if "error" not in r]
    failed = [r for r in records if "error" in r]
    return StudySummary(summarize(ok, truths), records, failed)


def write_replicates(summary: StudySummary, path) -> None:
    """Per-replicate artifact: one row per (replicate, quantity)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "seed", "name", "est", "se", "lo", "hi"])
        for rec in summary.replicates:
            if "error" in rec:
                w.writerow([rec["rep"], rec["seed"], "error", rec["error"], "", "", ""])
                continue
            for name, v in rec.items():
                if isinstance(v, dict):
                    w.writerow([rec["rep"], rec["seed"], name] + [repr(float(v[c])) for c in ("est", "se", "lo", "hi")])


def read_replicates(path) -> list:
    """Inverse of :func:`write_replicates` (successful replicates only)."""
    recs = {}
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            if row["name"] == "error":
                continue
            rec = recs.setdefault(int(row["rep"]), {"rep": int(row["rep"])})
            rec[row["name"]] = {c: float(row[c]) for c in ("est", "se", "lo", "hi")}
    return [recs[k] for k in sorted(recs)]
