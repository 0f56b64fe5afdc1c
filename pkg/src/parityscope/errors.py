"""Exception types raised across the package."""


class ParityscopeError(Exception):
    """Base class for all package errors."""


class TruncationError(ParityscopeError):
    """Charge-basis truncation did not converge."""


class UnusableOffsetChargeError(ParityscopeError, ValueError):
    """Parity frequency splitting is below the usable floor."""


class ConvergenceError(ParityscopeError):
    """An iterative fit did not converge."""


class SingularJacobianError(ParityscopeError):
    """The fit Jacobian is rank deficient at the solution."""


class DegenerateToneError(ParityscopeError):
    """Two Ramsey tones cannot be resolved from each other."""


class RecordValidationError(ParityscopeError, ValueError):
    """One or more measurement records failed validation.

    ``problems`` holds ``(line_number, message)`` pairs.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        lines = "; ".join(f"line {ln}: {msg}" for ln, msg in self.problems)
        super().__init__(f"invalid measurement records: {lines}")
