"""Exception hierarchy shared across the package.

Every error raised deliberately by this package derives from
:class:`CausalTreesError` so callers (including the CLI) can map failures
to exit codes without enumerating individual types.
"""

from __future__ import annotations


class CausalTreesError(Exception):
    """Base class for all package errors."""


class SchemaError(CausalTreesError):
    """Base class for input/validation failures (CLI exit code 2)."""


class ModelError(CausalTreesError):
    """Base class for estimation failures (CLI exit code 3)."""


class SchemaMismatch(SchemaError):
    """Schema refers to columns missing from the data, or is malformed."""


class CellError(SchemaError):
    """A cell failed to parse or violated its declared kind/bounds."""


class IncompleteData(SchemaError):
    """Missing values encountered while row dropping is disabled."""


class WeightError(SchemaError):
    """Weights are unusable (non-positive, non-finite, or zero-sum)."""


class UsageError(SchemaError):
    """An operation was invoked with inconsistent arguments."""


class FitError(ModelError):
    """An iterative fit failed to converge or diverged."""


class SeparationError(ModelError):
    """Logistic coefficients diverged, indicating (quasi-)separation."""


class RankError(ModelError):
    """Design matrix is rank deficient."""

    def __init__(self, message: str, columns: tuple[str, ...] = ()):
        super().__init__(message)
        self.columns = columns


class SupportError(ModelError):
    """Common-support evaluation received unusable inputs."""


class TmleError(ModelError):
    """The targeted fluctuation solve failed for every posterior draw."""


class BootstrapError(ModelError):
    """Too many bootstrap refits failed to form an interval."""
