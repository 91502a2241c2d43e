"""Exception types shared across the package.

Every error carries a short machine-parseable ``code`` so the CLI can emit
one-line diagnostics (``<CODE>: human text``) and scripts can branch on it.
"""

from __future__ import annotations


class PikanError(Exception):
    """Base class for all package errors."""

    code = "E_PIKAN"

    def oneline(self) -> str:
        return f"{self.code}: {self}"


class SchemaError(PikanError):
    """A required column or feature is missing or malformed."""

    code = "E_SCHEMA"


class DataError(PikanError):
    """Dataset-level failure (empty dataset, missing targets, bad rows)."""

    code = "E_DATA"


class ArgumentError(PikanError):
    """An operation was called with out-of-contract arguments."""

    code = "E_ARG"


class CalibrationError(PikanError):
    """Physics-constant calibration had no usable rows."""

    code = "E_CALIBRATION"


class ConfigError(PikanError):
    """Experiment or loss configuration is inconsistent."""

    code = "E_CONFIG"


class ConditioningError(PikanError):
    """A numerical fit became ill-conditioned (e.g. all rows excluded)."""

    code = "E_CONDITIONING"


class MetricUndefinedError(PikanError):
    """A metric has no defined value on the given vectors."""

    code = "E_METRIC_UNDEFINED"


class TrainingDivergedError(PikanError):
    """Training produced a non-finite loss; carries the last finite log."""

    code = "E_DIVERGED"

    def __init__(self, message: str, log=None):
        super().__init__(message)
        self.log = log
