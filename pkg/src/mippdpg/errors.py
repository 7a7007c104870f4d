"""Exception hierarchy and the CLI exit codes attached to each class."""


class MippError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ArgumentError(MippError, ValueError):
    """Invalid argument: index or time out of range, bad rank, shape mismatch."""

    exit_code = 2


class ConfigError(MippError):
    """Malformed or inconsistent experiment configuration."""

    exit_code = 2


class ModelValidityError(MippError):
    """A latent model produces a nonpositive intensity somewhere."""

    exit_code = 3


class DataError(MippError, ValueError):
    """Malformed event data.

    ``records`` holds the offending record numbers (line numbers for files,
    0-based positions for in-memory streams).
    """

    exit_code = 4

    def __init__(self, message, records=()):
        super().__init__(message)
        self.records = list(records)


class NumericalError(MippError, ArithmeticError):
    """Numerical failure (non-convergence, singular matrix, bound violation)."""

    exit_code = 5


class ThinningBoundError(NumericalError):
    """An intensity value exceeded the dominating rate used for thinning."""


class RankDeficiencyError(NumericalError):
    """A matrix that must have full rank (or be positive definite) does not."""
