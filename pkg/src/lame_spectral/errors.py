"""
Exception hierarchy for lame-spectral.

Precondition failures are ValueErrors so callers that only know the standard
library still catch them; convergence failures are RuntimeErrors.
"""

from typing import Any


class LameSpectralError(Exception):
    """Base class for all lame-spectral errors."""


class PreconditionError(LameSpectralError, ValueError):
    """An operation was called outside its documented domain."""


class SingularityError(PreconditionError):
    """The resolvent denominator fell below the configured floor."""

    def __init__(self, message: str, tau: float, xi: tuple[float, ...], distance: float):
        super().__init__(message)
        self.tau = tau
        self.xi = xi
        self.distance = distance


class ConvergenceError(LameSpectralError, RuntimeError):
    """An iterative method stopped before reaching its tolerance."""

    def __init__(self, message: str, trace: Any | None = None):
        super().__init__(message)
        self.trace = trace
