"""Exception types raised across the package."""


class MCMOError(Exception):
    """Base class for errors raised by this package."""


class ArgumentError(MCMOError, ValueError):
    """An argument has the wrong shape or an invalid value."""


class EvaluationError(MCMOError, ArithmeticError):
    """An objective or constraint evaluated to NaN or Inf."""

    def __init__(self, message, level=None, point=None):
        super().__init__(message)
        self.level = level
        self.point = point


class PreconditionError(MCMOError):
    """A start point or input violates an operation's precondition."""


class NoFeasibleStartError(MCMOError):
    """The feasibility (or weighted-start) solve could not find a point in C."""


class ConfigError(MCMOError):
    """A run configuration is malformed or references unknown entries."""


class BaselineFailure(MCMOError):
    """A baseline method hit a level subproblem the solver could not solve."""
