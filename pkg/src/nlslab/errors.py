"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class NLSLabError(Exception):
    """Base class for all errors raised by nlslab."""


class ConfigurationError(NLSLabError, ValueError):
    """Invalid grid, potential, scenario or parameter set (CLI exit code 2)."""


class UsageError(NLSLabError, ValueError):
    """Operands that cannot be combined (grid or eps mismatch, empty dictionary)."""


class PreconditionError(NLSLabError, ValueError):
    """An operation's documented precondition does not hold (e.g. mass sphere)."""


class NumericalFailure(NLSLabError, RuntimeError):
    """NaN, guard trip or other numerical breakdown (CLI exit code 3)."""


class ConvergenceError(NumericalFailure):
    """Newton iteration failed to reach the requested residual."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class ProjectionFailure(NumericalFailure):
    """Clipping a negative lobe changed the iterate by more than allowed."""


class GuardTripped(NumericalFailure):
    """Far-field mass or NaN detected during evolution."""

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class FitFailure(NLSLabError, ValueError):
    """Fewer than three usable points in a convergence ladder."""


class OrderCheckFailed(NLSLabError, AssertionError):
    """A measured convergence order or invariant missed its target (CLI exit code 1)."""
