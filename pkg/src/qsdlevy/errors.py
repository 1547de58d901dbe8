"""Exception types shared by all modules."""

from __future__ import annotations


class ValidationError(ValueError):
    """Parameters violate one or more model constraints.

    ``failures`` lists every violated constraint, not only the first.
    """

    def __init__(self, failures):
        if isinstance(failures, str):
            failures = [failures]
        self.failures = list(failures)
        super().__init__("; ".join(self.failures))


class DomainError(ValidationError):
    """Argument outside the domain of a function (Bessel at x <= 0, cumulant off its strip, ...)."""


class BracketError(ValidationError):
    """Root bracket endpoints do not straddle a sign change."""


class NumericalError(RuntimeError):
    """A numerical routine did not converge.

    Carries the best estimate and its error bound when available.
    """

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error
