"""Exception types raised by the solver."""


class HyflexaError(Exception):
    """Base class for all solver errors."""


class ConfigError(HyflexaError, ValueError):
    """Invalid parameters or an unsatisfiable request (e.g. exactness on an iterative path)."""


class NumericError(HyflexaError, ArithmeticError):
    """Non-finite evaluator output, indefinite curvature, or a degenerate subproblem.

    ``term`` names the offending quantity when known.
    """

    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class ConvergenceError(HyflexaError, RuntimeError):
    """An iterative inner solver hit its iteration cap."""

    def __init__(self, message, achieved_accuracy=float("nan")):
        super().__init__(message)
        self.achieved_accuracy = achieved_accuracy


class DescentViolation(HyflexaError, AssertionError):
    """The per-iteration descent inequality failed (debug check)."""


class SolverError(HyflexaError, RuntimeError):
    """Wraps an error raised inside the main loop with iteration context.

    Attributes
    ----------
    iteration : int
    trace : list of IterationTrace
        Rows recorded before the failure.
    """

    def __init__(self, message, iteration, trace, cause=None):
        super().__init__(message)
        self.iteration = iteration
        self.trace = trace
        self.cause = cause
