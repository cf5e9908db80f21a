"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class FracFlowError(Exception):
    """Base class for library errors."""


class GridError(FracFlowError):
    """Raised when a grid or chart cannot support the requested operator."""


class InvalidSamples(FracFlowError):
    """Raised when sampled values contain NaN or infinity."""


class DegenerateMetric(FracFlowError):
    """Raised when a metric block is singular or badly conditioned."""


class ChartMismatch(FracFlowError):
    """Raised when two fields live on different charts."""


class ConfigError(FracFlowError):
    """Raised for invalid configuration; ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class FlowSingularity(FracFlowError):
    """Raised when an evolving metric degenerates.

    The partial history and per-step records computed before the failure are
    attached so callers can still write them out.
    """

    def __init__(self, message: str, chi: float, history=None, records=None):
        super().__init__(f"{message} at chi={chi:.17g}")
        self.chi = chi
        self.history = history
        self.records = records if records is not None else []
