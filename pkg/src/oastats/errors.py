"""Typed errors with machine-parseable categories.

Every error carries a stable ``category`` slug that the CLI maps to a
distinct exit code and prints as ``error:<category>: <message>``.
"""

from __future__ import annotations


class OAStatsError(Exception):
    """Base class for all package errors."""

    category = "error"


class DimensionMismatchError(OAStatsError):
    category = "dimension-mismatch"


class NonFiniteValueError(OAStatsError):
    category = "non-finite-value"


class DegeneratePanelError(OAStatsError):
    category = "degenerate-panel"


class InvalidWeightsError(OAStatsError):
    category = "invalid-weights"


class InvalidParameterError(OAStatsError):
    category = "invalid-parameter"


class EmptySupportError(OAStatsError):
    category = "empty-support"


class AllMissingPatternError(OAStatsError):
    category = "all-missing-pattern"


class TooManySitesError(OAStatsError):
    category = "too-many-sites"


class NegativeVarianceError(OAStatsError):
    category = "negative-variance"


class UndefinedDiagnosticError(OAStatsError):
    category = "undefined-diagnostic"


class NonPsdMatrixError(OAStatsError):
    category = "non-psd-matrix"


class MaxIterationsError(OAStatsError):
    category = "max-iterations"


class InfeasibleSignsError(OAStatsError):
    category = "infeasible-signs"


class IndexOutOfRangeError(OAStatsError):
    category = "index-out-of-range"


class ParseError(OAStatsError):
    category = "parse-error"


class IOFailureError(OAStatsError):
    category = "io-error"
