"""Exception hierarchy shared by every module."""


class DegmaError(Exception):
    """Base class for all package errors."""


class ParameterError(DegmaError, ValueError):
    """An argument is outside its admissible range."""


class DomainMembershipError(DegmaError, ValueError):
    """A point lies outside the closed domain."""


class RangeError(DegmaError, IndexError):
    """A point or stencil leaves the grid."""


class EvaluationError(DegmaError, ValueError):
    """A sampled function returned a non-finite value."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConvexityError(DegmaError, ValueError):
    """A field that must be discretely convex is not."""


class NonConvergenceError(DegmaError, RuntimeError):
    """An iteration stopped without meeting its tolerance.

    The partial report (if any) is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConvexificationError(NonConvergenceError):
    """Newton could not find a damped step that keeps the iterate convex."""


class LinearSolveError(DegmaError, RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class FitError(DegmaError, ValueError):
    """Least-squares problem is rank deficient or its preconditions fail."""


class TransformError(DegmaError, ValueError):
    """Hodograph or Legendre transform could not be formed."""


class SamplingError(DegmaError, ValueError):
    """Too few samples to estimate the requested quantity."""


class SpecError(DegmaError, ValueError):
    """Unknown barrier kind or malformed barrier parameters."""


class ConfigError(DegmaError, ValueError):
    """Experiment configuration does not validate.

    ``pointer`` is a JSON pointer to the offending entry.
    """

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class PlotError(DegmaError, ValueError):
    """CSV columns do not match the requested plot kind."""


class StageError(DegmaError, RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage, error):
        super().__init__(f"stage {stage}: {type(error).__name__}: {error}")
        self.stage = stage
