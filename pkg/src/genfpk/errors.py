"""Exception hierarchy shared across the solver suite."""


class GenFpkError(Exception):
    """Base class for all package errors."""


class ParameterError(GenFpkError, ValueError):
    """A constructor or factory received invalid parameter values."""


class UsageError(GenFpkError, ValueError):
    """An operation was called on incompatible inputs (e.g. a nonlinear
    model passed to a linear-only coefficient)."""


class DomainError(GenFpkError, ValueError):
    """A value lies outside the domain an operation is defined on."""


class ConfigurationError(GenFpkError, RuntimeError):
    """A discretization is degenerate (e.g. singular mass matrix)."""


class StepFailure(GenFpkError, RuntimeError):
    """A time step could not be completed."""

    def __init__(self, message, *, t=None, dt=None, residual=None, cond=None):
        super().__init__(message)
        self.t = t
        self.dt = dt
        self.residual = residual
        self.cond = cond


class DivergenceError(GenFpkError, RuntimeError):
    """The numerical solution blew up (unbounded pdf values or gross loss
    of normalization)."""

    def __init__(self, message, *, t=None):
        super().__init__(message)
        self.t = t
