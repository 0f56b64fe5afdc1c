"""Simulation and analysis of quasiparticle charge-parity switching in transmons."""

__version__ = "0.1.0"

from ._kernels import BACKEND  # noqa: E402
from .errors import (ConvergenceError, DegenerateToneError, ParityscopeError,  # noqa: E402
                     RecordValidationError, SingularJacobianError, TruncationError,
                     UnusableOffsetChargeError)

__all__ = [
    "__version__", "BACKEND", "ParityscopeError", "TruncationError", "UnusableOffsetChargeError",
    "ConvergenceError", "SingularJacobianError", "DegenerateToneError", "RecordValidationError",
]
