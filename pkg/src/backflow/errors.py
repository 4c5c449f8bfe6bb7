"""Exception hierarchy shared across the package.

Every error the service maps to an HTTP status (and the CLI maps to an
exit code) is defined here so the mapping lives in one table.
"""


class BackflowError(Exception):
    """Base class for all package-specific errors."""


class DomainError(BackflowError, ValueError):
    """Input outside the mathematical domain of an operation (e.g. r <= 0)."""


class DegenerateVarianceError(DomainError):
    """A Gaussian score was requested at zero or negative variance."""


class DegenerateDenominatorError(DomainError):
    """A relative-error denominator (total path displacement) was zero."""


class ModelDivergenceError(BackflowError):
    """The regression network produced a non-finite value."""


class DatasetCorruptionError(BackflowError):
    """Stored payload does not match its sidecar (hash or length)."""


class FormatVersionError(BackflowError):
    """Stored file was written with an unsupported format version."""
