"""Reading and writing data sets, potential outcomes and fitted models.

Floats are written with :func:`repr`, which round-trips exactly, so a data
set written and read back is bit-identical.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .data import Dataset
from .errors import SchemaError, ValidationError
from .npmle import ArmFit, ModelFit
from .survival import StepHazard

FORMAT_VERSION = 1
BASE_COLUMNS = ("x", "y", "d1", "d2", "a")


def _fmt(v) -> str:
    return repr(float(v))


def write_dataset(data: Dataset, path) -> None:
    """Write ``data`` as CSV with header ``x,y,d1,d2,a,<covariates>``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(BASE_COLUMNS) + list(data.covariate_names))
        for i in range(data.n):
            w.writerow(
                [_fmt(data.x[i]), _fmt(data.y[i]), int(data.d1[i]), int(data.d2[i]), int(data.a[i])]
                + [_fmt(v) for v in data.z[i]]
            )


def ingest_csv(path, covariates=None) -> Dataset:
    """Read and validate a data set.

    Parameters
    ----------
    path : path-like
    covariates : sequence of str, optional
        Required covariate columns.  By default every column after the five
        base columns is a covariate.

    Raises
    ------
    SchemaError
        Missing base or covariate columns.
    ValidationError
        Malformed values or ``x > y``; the message cites the file line.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in BASE_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}")
    if covariates is None:
        covariates = [h for h in header if h not in BASE_COLUMNS]
    else:
        absent = [c for c in covariates if c not in header]
        if absent:
            raise SchemaError(f"{path}: missing covariate column(s) {absent}")
    if not covariates:
        raise SchemaError(f"{path}: no covariate columns")
    pos = {h: j for j, h in enumerate(header)}
    n = len(rows) - 1
    x, y = np.empty(n), np.empty(n)
    flags = np.empty((n, 3), dtype=np.int64)
    z = np.empty((n, len(covariates)))
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != len(header):
            raise ValidationError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
        try:
            x[i] = float(row[pos["x"]])
            y[i] = float(row[pos["y"]])
            for k, name in enumerate(("d1", "d2", "a")):
                v = float(row[pos[name]])
                if v not in (0.0, 1.0):
                    raise ValueError(f"{name} must be 0 or 1")
                flags[i, k] = int(v)
            z[i] = [float(row[pos[c]]) for c in covariates]
        except ValueError as exc:
            raise ValidationError(f"{path}: line {line}: {exc}") from None
        if not (np.isfinite(x[i]) and np.isfinite(y[i]) and np.all(np.isfinite(z[i]))):
            raise ValidationError(f"{path}: line {line}: non-finite value")
        if x[i] < 0 or y[i] < 0:
            raise ValidationError(f"{path}: line {line}: negative time")
        if x[i] > y[i]:
            raise ValidationError(f"{path}: line {line}: x > y")
    return Dataset(x, y, flags[:, 0], flags[:, 1], flags[:, 2], z, tuple(covariates))


def data_report(data: Dataset) -> dict:
    """Row count, arm sizes and censoring rates of the two events."""
    c1, c2 = data.censoring_rates()
    return {"n": data.n, "n_arm0": int(np.sum(data.a == 0)), "n_arm1": int(np.sum(data.a == 1)),
            "censoring_t1": float(c1), "censoring_t2": float(c2)}


def write_potential(po, path, covariate_names=None, include_gamma: bool = False) -> None:
    """Write both-world outcomes as ``t1_0,t2_0,t1_1,t2_1,<covariates>[,gamma]``."""
    names = list(covariate_names or [f"z{j + 1}" for j in range(po.z.shape[1])])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t1_0", "t2_0", "t1_1", "t2_1"] + names + (["gamma"] if include_gamma else []))
        for i in range(po.z.shape[0]):
            row = [po.t1[i, 0], po.t2[i, 0], po.t1[i, 1], po.t2[i, 1], *po.z[i]]
            if include_gamma:
                row.append(po.gamma[i])
            w.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# fitted models


def _arm_to_dict(arm: ArmFit) -> dict:
    return {
        "alpha": arm.alpha,
        "tau": arm.tau,
        "beta1": arm.beta1.tolist(),
        "beta2": arm.beta2.tolist(),
        "lambda01": {"times": arm.lambda01.times.tolist(), "jumps": arm.lambda01.jumps.tolist()},
        "lambda02": {"times": arm.lambda02.times.tolist(), "jumps": arm.lambda02.jumps.tolist()},
        "converged": bool(arm.converged),
        "loglik": arm.loglik,
        "iterations": int(arm.iterations),
    }


def fit_to_dict(fit: ModelFit) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "family": fit.arm0.family,
        "sigma": float(fit.sigma),
        "covariate_names": list(fit.covariate_names),
        "arms": {"0": _arm_to_dict(fit.arm0), "1": _arm_to_dict(fit.arm1)},
    }


def fit_from_dict(doc: dict) -> ModelFit:
    if doc.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported fit format_version {doc.get('format_version')!r}")
    try:
        arms = []
        for key in ("0", "1"):
            a = doc["arms"][key]
            arms.append(ArmFit(
                a["alpha"], a["beta1"], a["beta2"],
                StepHazard(a["lambda01"]["times"], a["lambda01"]["jumps"]),
                StepHazard(a["lambda02"]["times"], a["lambda02"]["jumps"]),
                a["converged"], a["loglik"], a["iterations"], doc["family"],
            ))
        return ModelFit(arms[0], arms[1], doc["sigma"], tuple(doc["covariate_names"]))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed fit document: {exc}") from None


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, default=_default, allow_nan=True)
        fh.write("\n")


def write_fit(fit: ModelFit, path) -> None:
    dump_json(fit_to_dict(fit), path)


def read_fit(path) -> ModelFit:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not a fit document ({exc})") from None
    return fit_from_dict(doc)


def fit_diagnostics(fit: ModelFit) -> dict:
    """Per-arm diagnostics (initializer, MC schedule, acceptance, Q trace)."""
    return {"sigma": fit.sigma, "model": fit.diagnostics,
            "arms": {"0": fit.arm0.diagnostics, "1": fit.arm1.diagnostics}}
