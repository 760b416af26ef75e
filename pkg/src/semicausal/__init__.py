"""Copula-based semi-competing risks regression and survivor causal effects."""

from .causal import SceCurve, default_grid, sce, sce_frailty, stratum_quantities
from .copula import CopulaSpec, alpha_from_tau, tau_from_alpha
from .data import Dataset, SubjectRecord
from .datagen import SimSpec, potential_outcomes, simulate, true_sce
from .errors import (
    BootstrapUnstableError,
    ConfigError,
    NumericError,
    SchemaError,
    SemicausalError,
    ValidationError,
)
from .harness import BootstrapConfig, StudySummary, bootstrap, run_study
from .io import ingest_csv, read_fit, write_dataset, write_fit
from .mcem import FrailtySpec, fit_mcem
from .npmle import ArmFit, ModelFit, fit as fit_npmle

__version__ = "0.1.0"

__all__ = [
    "ArmFit", "BootstrapConfig", "BootstrapUnstableError", "ConfigError", "CopulaSpec",
    "Dataset", "FrailtySpec", "ModelFit", "NumericError", "SceCurve", "SchemaError",
    "SemicausalError", "SimSpec", "StudySummary", "SubjectRecord", "ValidationError",
    "alpha_from_tau", "bootstrap", "default_grid", "fit_mcem", "fit_npmle", "ingest_csv",
    "potential_outcomes", "read_fit", "run_study", "sce", "sce_frailty", "simulate",
    "stratum_quantities", "tau_from_alpha", "true_sce", "write_dataset", "write_fit",
]
