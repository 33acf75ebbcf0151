"""Exception hierarchy shared by all privsynth modules."""


class PrivsynthError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(PrivsynthError, ValueError):
    """Matrix shapes do not agree."""


class NotPositiveDefiniteError(PrivsynthError, ValueError):
    """A matrix required to be positive (semi)definite is not."""


class StabilityError(PrivsynthError):
    """A transition matrix is not Schur stable.

    Attributes:
        radius: spectral radius of the offending matrix.
    """

    def __init__(self, message, radius=float("nan")):
        super().__init__(message)
        self.radius = radius


class ConvergenceError(PrivsynthError):
    """An iteration hit its step cap before reaching tolerance."""


class InfeasibleError(PrivsynthError):
    """No strictly feasible point exists (or could be constructed).

    Attributes:
        constraint: name of the constraint block that could not be satisfied.
    """

    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint


class NumericalError(PrivsynthError):
    """Factorization breakdown or loss of precision."""


class ConfigError(PrivsynthError, ValueError):
    """Invalid run configuration."""
