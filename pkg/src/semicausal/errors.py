"""Exception hierarchy.

Every exception carries a short machine-readable ``category`` and the exit
code the command-line interface reports for it.
"""


class SemicausalError(Exception):
    category = "error"
    exit_code = 1


class ValidationError(SemicausalError, ValueError):
    """Invalid input data or arguments."""

    category = "validation"
    exit_code = 2


class BoundaryError(ValidationError):
    """Copula derivative requested on the boundary of the unit square."""

    category = "boundary"


class DegenerateDataError(ValidationError):
    """Data cannot support the requested fit (e.g. no events in an arm)."""

    category = "degenerate-data"


class NumericError(SemicausalError, ArithmeticError):
    """A numerical routine failed to converge or produced non-finite values."""

    category = "numeric"
    exit_code = 3


class DegenerateStratumError(NumericError):
    """A principal stratum has (numerically) zero probability."""

    category = "degenerate-stratum"


class BootstrapUnstableError(NumericError):
    category = "bootstrap-unstable"


class ConfigError(SemicausalError, ValueError):
    """Inconsistent configuration (scenario, tau, sigma, ...)."""

    category = "config"
    exit_code = 4


class SchemaError(ValidationError):
    """A tabular file does not have the expected columns."""

    category = "schema"
