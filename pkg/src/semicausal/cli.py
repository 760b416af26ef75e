"""Command-line interface.

Subcommands::

    simulate     draw a scenario data set (and optionally its potential outcomes)
    fit          fit both arms, with or without a gamma frailty
    sce          SCE curves from a saved fit
    sensitivity  fit and SCE curves for a list of frailty variances
    bootstrap    SCE curves with bootstrap bands and parameter standard errors
    study        Monte Carlo study of bias, MCSD, ASE and coverage

All randomness flows from ``--seed``.  Failures print a one-line JSON object
``{"error": <category>, "message": ...}`` on stderr and exit with 2
(validation), 3 (numeric) or 4 (configuration).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, io
from .causal import default_grid
from .datagen import SimSpec, simulate
from .errors import ConfigError, SemicausalError, ValidationError
from .mcem import FrailtySpec


def _parse_grid(spec: str, data) -> np.ndarray:
    if spec.startswith("auto"):
        try:
            size = int(spec[4:] or 30)
        except ValueError:
            raise ConfigError(f"bad grid {spec!r}; use autoN or a comma-separated list") from None
        return default_grid(data, size)
    try:
        grid = np.array([float(t) for t in spec.split(",")])
    except ValueError:
        raise ConfigError(f"bad grid {spec!r}; use autoN or a comma-separated list") from None
    if np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise ConfigError("grid times must be nonnegative and increasing")
    return grid


def _parse_sigmas(text: str) -> list:
    try:
        out = [float(s) for s in text.split(",")]
    except ValueError:
        raise ConfigError(f"bad sigma list {text!r}") from None
    if any(s < 0 for s in out):
        raise ConfigError("frailty variances must be nonnegative")
    return out


def _sigma_tag(s: float) -> str:
    return f"{s:g}".replace(".", "p")


def _report(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _frailty(args, sigma, seed):
    return FrailtySpec(sigma=sigma, seed=seed, max_iter=args.max_iter)


def _fit(args, data, sigma, seed):
    return harness.fit_model(data, sigma, args.copula, _frailty(args, sigma, seed))


def cmd_simulate(args) -> None:
    spec = SimSpec(args.scenario, args.n, args.tau, args.cu, args.sigma, args.seed, args.copula)
    data, po = simulate(spec, return_potential=True)
    io.write_dataset(data, args.out)
    if args.oracle:
        io.write_potential(po, args.oracle, data.covariate_names, include_gamma=spec.scenario == "Ex4")
    _report(io.data_report(data))


def cmd_fit(args) -> None:
    data = io.ingest_csv(args.data)
    fit = _fit(args, data, args.sigma, args.seed)
    io.write_fit(fit, args.out)
    out = Path(args.out)
    io.dump_json(io.fit_diagnostics(fit), out.with_name(out.stem + ".diagnostics.json"))
    _report({"converged": fit.converged, "tau0": fit.arm0.tau, "tau1": fit.arm1.tau})


def cmd_sce(args) -> None:
    data = io.ingest_csv(args.data)
    fit = io.read_fit(args.fit)
    grid = _parse_grid(args.grid, data)
    harness.estimate_sce(fit, data, grid, args.n_gamma, args.seed).to_csv(args.out)


def cmd_sensitivity(args) -> None:
    data = io.ingest_csv(args.data)
    grid = _parse_grid(args.grid, data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, s in enumerate(_parse_sigmas(args.sigmas)):
        fit = _fit(args, data, s, harness.derive_seed(args.seed, i, 0))
        tag = _sigma_tag(s)
        io.write_fit(fit, out / f"fit_sigma{tag}.json")
        curve = harness.estimate_sce(fit, data, grid, args.n_gamma, harness.derive_seed(args.seed, i, 1))
        curve.to_csv(out / f"sce_sigma{tag}.csv")


def cmd_bootstrap(args) -> None:
    data = io.ingest_csv(args.data)
    grid = _parse_grid(args.grid, data)
    cfg = harness.BootstrapConfig(args.B, args.seed, args.ci_method, args.parallel, args.n_gamma)
    frailty = _frailty(args, args.sigma, args.seed) if args.sigma > 0 else None
    res = harness.bootstrap(data, grid, cfg, frailty, args.copula)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.curve.to_csv(out / "sce.csv")
    with open(out / "params.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "estimate", "se", "lo", "hi"])
        for k, v in res.params.items():
            lo, hi = res.param_ci[k]
            w.writerow([k] + [repr(float(x)) for x in (v, res.param_se[k], lo, hi)])
    _report({"replicates": res.replicates, "failures": res.failures})


def cmd_study(args) -> None:
    spec = SimSpec(args.scenario, args.n, args.tau, args.cu, args.sigma, args.seed, args.copula)
    cfg = harness.BootstrapConfig(args.B, args.seed) if args.B else None
    times = [float(t) for t in args.times.split(",")]
    progress = (lambda k, n: print(f"replicate {k}/{n}", file=sys.stderr)) if args.verbose else None
    summary = harness.run_study(spec, args.reps, cfg, times, args.n_mc, args.parallel, progress)
    summary.to_csv(args.out)
    out = Path(args.out)
    harness.write_replicates(summary, out.with_name(out.stem + "_replicates.csv"))
    _report({"replicates": args.reps, "failed": len(summary.failures)})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semicausal", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def common(q, seed=True, copula=True, frailty=False):
        if seed:
            q.add_argument("--seed", type=int, default=0)
        if copula:
            q.add_argument("--copula", default="frank", choices=("frank", "clayton"))
        if frailty:
            q.add_argument("--max-iter", type=int, default=100, help="Monte Carlo EM iterations")

    q = sub.add_parser("simulate", help="simulate a scenario data set")
    q.add_argument("--scenario", default="Ex1")
    q.add_argument("--n", type=int, default=1000)
    q.add_argument("--tau", type=float, default=0.3)
    q.add_argument("--cu", type=float, default=None, help="censoring bound (scenario default)")
    q.add_argument("--sigma", type=float, default=0.0, help="frailty variance (Ex4)")
    q.add_argument("--out", required=True)
    q.add_argument("--oracle", help="also write both-world potential outcomes here")
    common(q)
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("fit", help="fit the copula model")
    q.add_argument("--data", required=True)
    q.add_argument("--sigma", type=float, default=0.0)
    q.add_argument("--out", required=True)
    common(q, frailty=True)
    q.set_defaults(func=cmd_fit)

    q = sub.add_parser("sce", help="SCE curves from a saved fit")
    q.add_argument("--fit", required=True)
    q.add_argument("--data", required=True)
    q.add_argument("--grid", default="auto30")
    q.add_argument("--n-gamma", type=int, default=200)
    q.add_argument("--out", required=True)
    common(q, copula=False)
    q.set_defaults(func=cmd_sce)

    q = sub.add_parser("sensitivity", help="SCE curves over frailty variances")
    q.add_argument("--data", required=True)
    q.add_argument("--sigmas", default="0,0.5,1,1.5")
    q.add_argument("--grid", default="auto30")
    q.add_argument("--n-gamma", type=int, default=200)
    q.add_argument("--out", required=True)
    common(q, frailty=True)
    q.set_defaults(func=cmd_sensitivity)

    q = sub.add_parser("bootstrap", help="bootstrap bands and standard errors")
    q.add_argument("--data", required=True)
    q.add_argument("--B", type=int, default=100)
    q.add_argument("--sigma", type=float, default=0.0)
    q.add_argument("--grid", default="auto30")
    q.add_argument("--ci-method", default="percentile", choices=("percentile", "normal"))
    q.add_argument("--parallel", type=int, default=1)
    q.add_argument("--n-gamma", type=int, default=200)
    q.add_argument("--out", required=True)
    common(q, frailty=True)
    q.set_defaults(func=cmd_bootstrap)

    q = sub.add_parser("study", help="Monte Carlo simulation study")
    q.add_argument("--scenario", default="Ex1")
    q.add_argument("--reps", type=int, default=50)
    q.add_argument("--n", type=int, default=1000)
    q.add_argument("--tau", type=float, default=0.3)
    q.add_argument("--cu", type=float, default=None)
    q.add_argument("--sigma", type=float, default=0.0)
    q.add_argument("--B", type=int, default=0, help="bootstrap replicates per data set (0: none)")
    q.add_argument("--times", default="3,6")
    q.add_argument("--n-mc", type=int, default=200_000)
    q.add_argument("--parallel", type=int, default=1)
    q.add_argument("--verbose", action="store_true")
    q.add_argument("--out", required=True)
    common(q)
    q.set_defaults(func=cmd_study)
    return p


def _fail(category: str, message: str, code: int) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except SemicausalError as exc:
        return _fail(exc.category, str(exc), exc.exit_code)
    except FileNotFoundError as exc:
        return _fail("io", str(exc), ValidationError.exit_code)
    return 0


if __name__ == "__main__":
    sys.exit(main())
