class AntiJamError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(AntiJamError, ValueError):
    pass


class InfeasibleStateError(AntiJamError, ValueError):
    """A state or history violates the connection/budget constraints."""


class NumericFailure(AntiJamError, ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance.

    The last estimate and its error bound are kept on the exception so callers
    can decide whether a looser answer is still usable.
    """

    def __init__(self, message, estimate=None, abserr=None):
        super().__init__(message)
        self.estimate = estimate
        self.abserr = abserr


class SingularityError(AntiJamError, ZeroDivisionError):
    def __init__(self, message, beta=None):
        super().__init__(message)
        self.beta = beta


class SolverFailure(AntiJamError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
