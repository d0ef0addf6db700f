"""Exception hierarchy shared by every back-end."""


class SmoothGradError(Exception):
    """Base class for all errors raised by this package."""


class AdNumericError(SmoothGradError, ArithmeticError):
    """Arithmetic left its domain (division by ~0, log of a non-positive value, ...)."""

    def __init__(self, op, message):
        super().__init__(f"{op}: {message}")
        self.op = op


class UnsupportedOpError(SmoothGradError, TypeError):
    """An operation that would hide a discontinuity outside of a branch."""


class SmoothUsageError(SmoothGradError, TypeError):
    """A program used the smooth API incorrectly (e.g. ``if x > 0`` on a smooth value)."""


class EmptyStateError(SmoothGradError):
    """Every path state fell below the weight threshold."""


class RunawayLoopError(SmoothGradError):
    """A loop exceeded its iteration cap."""


class DegenerateMergeError(SmoothGradError, ValueError):
    """Two mixture components with zero total weight cannot be merged."""


class ConfigError(SmoothGradError, ValueError):
    """Invalid estimator, problem or run configuration."""


class SampleError(SmoothGradError):
    """A program failed while executing one or more Monte Carlo samples."""

    def __init__(self, samples, cause):
        ids = ", ".join(str(s) for s in list(samples)[:8])
        super().__init__(f"sample(s) {ids}: {cause}")
        self.samples = list(samples)
        self.__cause__ = cause
