"""Exception types raised across the package."""


class OptSenseError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(OptSenseError):
    """A matrix expected to be positive definite failed to factor."""


class NonConvergence(OptSenseError):
    """An iterative routine hit its iteration cap."""


class DegenerateScaling(OptSenseError):
    """Unscented scaling parameters give ``n_a + rho == 0``."""


class SingularInnovation(OptSenseError):
    """The innovation covariance could not be inverted."""


class SingularInnovationCovariance(SingularInnovation):
    """The prior measurement covariance could not be inverted for the LMI."""


class NoFeasibleStart(OptSenseError):
    """Pruning was requested on a problem that is infeasible to begin with."""


class ConfigParseError(OptSenseError):
    """The configuration document is not valid YAML or not a mapping."""


class ConfigValidationError(OptSenseError):
    """A configuration value is missing, of the wrong type or out of range."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")
