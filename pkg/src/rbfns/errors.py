"""Exception types used across the package."""


class RbfnsError(Exception):
    """Base class for package errors."""


class InvalidGeometryError(RbfnsError, ValueError):
    pass


class InsufficientPointsError(RbfnsError, ValueError):
    pass


class OutOfDomainError(RbfnsError, ValueError):
    pass


class DegenerateStencilError(RbfnsError):
    """A local collocation system is singular or badly rank-deficient."""

    def __init__(self, center, message=""):
        self.center = int(center)
        super().__init__(message or f"degenerate stencil at point {center}")


class DimensionMismatchError(RbfnsError, ValueError):
    pass


class SingularPreconditionerError(RbfnsError):
    pass


class BreakdownError(RbfnsError):
    """BiCGSTAB scalar fell below the machine-safe threshold twice."""


class NonConvergenceError(RbfnsError):
    """Iteration cap reached; carries the best iterate seen so far."""

    def __init__(self, message, best_x=None, history=None):
        self.best_x = best_x
        self.history = history if history is not None else []
        super().__init__(message)


class InvalidParameterError(RbfnsError, ValueError):
    pass


class InvalidOperatorError(RbfnsError, ValueError):
    pass


class RejectedParameterError(RbfnsError, ValueError):
    pass


class DivergenceError(RbfnsError):
    """NaN/Inf detected during time integration."""

    def __init__(self, message, t_last=None):
        self.t_last = t_last
        super().__init__(message)


class StalledIterationError(RbfnsError):
    """Outer iteration cap exceeded; carries the delta history."""

    def __init__(self, message, deltas=None):
        self.deltas = deltas if deltas is not None else []
        super().__init__(message)


class NonSteadyError(RbfnsError):
    """Step cap reached before the steady tolerance; carries the trace."""

    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)


class DegenerateBoundaryError(RbfnsError):
    pass


class IndeterminateOrderError(RbfnsError, ValueError):
    pass


class AperiodicSignalError(RbfnsError, ValueError):
    pass


class UnknownCaseError(RbfnsError, ValueError):
    pass


class InconsistentOverrideError(RbfnsError, ValueError):
    pass


class CaseFileError(RbfnsError, ValueError):
    pass
