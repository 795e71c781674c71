"""Exception hierarchy shared by all modules."""


class RoughflowError(Exception):
    """Base class for library errors."""


class GridMismatch(RoughflowError):
    """Grids are not nested, not aligned, or not identical where required."""


class InvalidInput(RoughflowError):
    """Input data violates a precondition (NaN, wrong shape, bad symmetry)."""


class InvalidConfig(RoughflowError):
    """A configuration value is out of its admissible range."""


class ConfigError(RoughflowError):
    """Configuration is structurally inconsistent for the requested computation."""


class OutOfRange(RoughflowError):
    """A requested time window exceeds the stored extent of a path."""


class ProjectionError(RoughflowError):
    """A vector expected in one spectral block has mass in the other."""


class AssumptionError(RoughflowError):
    """A nonlinearity violates the stationarity assumptions at the origin."""


class ConvergenceError(RoughflowError):
    """An iteration failed to converge.

    Attributes
    ----------
    trace : list of float
        Residuals or contraction rates recorded before giving up.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class StepUnderflow(RoughflowError):
    """Adaptive horizon shrinking fell below the grid spacing.

    Attributes
    ----------
    diagnostics : dict
        Contraction history of the failed attempt.
    partial : object or None
        Partial trajectory computed before the failure, if any.
    """

    def __init__(self, message, diagnostics=None, partial=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
        self.partial = partial
