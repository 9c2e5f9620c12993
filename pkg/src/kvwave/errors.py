"""Exception types raised across the package."""


class KVWaveError(Exception):
    """Base class for all package errors."""


class GridError(KVWaveError, ValueError):
    pass


class CoefficientError(KVWaveError, ValueError):
    """A sampled coefficient violates its bounds, symmetry or definiteness."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class SolverError(KVWaveError, RuntimeError):
    """Conjugate gradient failed to reach its residual tolerance."""

    def __init__(self, message, iterations=None, residual=None, condition_estimate=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.condition_estimate = condition_estimate


class StepFailure(KVWaveError, RuntimeError):
    """An implicit step could not be completed (Picard stall or divergence)."""

    def __init__(self, message, time=None, iterations=None, history=None):
        super().__init__(message)
        self.time = time
        self.iterations = iterations
        self.history = history or []


class MetricError(KVWaveError, ValueError):
    """The metric lost positive-definiteness at a queried point."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class ScenarioError(KVWaveError, ValueError):
    pass
