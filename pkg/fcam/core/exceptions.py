"""Exception hierarchy.

Validation problems (bad input, bad config, unreadable draw files) subclass
``ValueError`` and map to CLI exit code 2. Sampler failures subclass
``RuntimeError`` and map to exit code 1.
"""
from typing import Optional


class FcamError(Exception):
    """Base class for all library errors."""


class TraceValidationError(FcamError, ValueError):
    """Raised when a fluorescence trace fails validation."""


class ConfigError(FcamError, ValueError):
    """Raised when a run configuration is malformed or inconsistent."""


class DrawFileError(FcamError, ValueError):
    """Raised when a draw file is unreadable or inconsistent with others."""


class SamplerError(FcamError, RuntimeError):
    """Raised when an MCMC step fails.

    Attributes:
        iteration: Iteration index at which the failure happened, if known.
    """

    def __init__(self, message: str, iteration: Optional[int] = None):
        self.iteration = iteration
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)


class QuadratureError(SamplerError):
    """Raised when the slab marginal quadrature does not converge."""
