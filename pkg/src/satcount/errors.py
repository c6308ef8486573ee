"""Exception types shared across the simulator."""

from __future__ import annotations


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class ManifestError(ValidationError):
    """Raised when a scene manifest cannot be parsed.

    Carries the 1-based line number of the offending record so callers can
    point at the broken line.
    """

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"manifest line {line_no}: {message}")


class MetricUndefinedError(ValueError):
    """Raised when a metric has no defined value (e.g. zero total ground truth)."""
