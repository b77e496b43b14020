"""Exception types shared across the package."""


class MpcMonError(Exception):
    """Base class for all package errors."""


class InvalidInputError(MpcMonError, ValueError):
    """Non-finite or otherwise malformed numerical input."""


class ConfigurationError(MpcMonError, ValueError):
    """Inconsistent dimensions, unknown identifiers or bad settings."""


class InsufficientDataError(MpcMonError):
    """Too few samples for the requested estimate."""


class IllConditionedError(MpcMonError):
    """A regression or covariance problem without a unique solution."""


class DegenerateBaselineError(IllConditionedError):
    """Baseline covariance is singular even after regularization."""


class SolverError(MpcMonError):
    """The MPC solver hit its iteration cap or failed.

    ``best`` holds the best iterate (an ``MpcSolution`` with the input
    projected onto its hard bounds) when one is available.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
