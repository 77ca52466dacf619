# utils/errors.py
from __future__ import annotations

from typing import Optional, Tuple


class KraichnanError(Exception):
    """Base class for every error raised by the laboratory."""

    exit_code = 3


class UsageError(KraichnanError):
    """Wrong kernel family for an operation, malformed input, missing flags."""

    exit_code = 2


class NumericalError(KraichnanError):
    exit_code = 3


class DomainError(NumericalError, ValueError):
    """An argument lies outside the validated domain of an operation."""


class ResourceError(NumericalError):
    """A deliberate size cap was exceeded."""


class TiltTooSmallError(NumericalError):
    def __init__(self, message: str, suggested_mu: float):
        super().__init__(f"{message}; retry with tilt mu >= {suggested_mu:.6g}")
        self.suggested_mu = suggested_mu


class TiltTooLargeError(NumericalError):
    """The tilted solution fell below the normal double range; a smaller tilt keeps its precision."""

    def __init__(self, message: str, suggested_mu: float):
        super().__init__(f"{message}; retry with tilt mu <= {suggested_mu:.6g}")
        self.suggested_mu = suggested_mu


class BracketingError(NumericalError):
    def __init__(self, message: str, bracket: Optional[Tuple[float, float]] = None):
        if bracket is not None:
            message = f"{message} (bracket [{bracket[0]:.12g}, {bracket[1]:.12g}])"
        super().__init__(message)
        self.bracket = bracket


class PoleError(NumericalError):
    pass


class DivergenceError(NumericalError):
    """A Laplace transform was requested at or below its abscissa of convergence."""


class KernelNotPSDError(NumericalError):
    pass


class StepSizeError(NumericalError):
    pass


class HorizonError(NumericalError):
    """The solution horizon is too short for the requested spectral estimate."""
