"""Quasi self-dual exponential Levy models: order/carrying-cost maps, duality checks,
Monte Carlo verification and the semi-static barrier hedge."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import BracketError, DomainError, NumericalError, ValidationError
from .models import QsdBase, QsdSpec, qsd_to_native
from .qsd import alpha_of_lambda, calibrate, full_report, lambda_of_alpha

__all__ = [
    "__version__",
    "BracketError",
    "DomainError",
    "NumericalError",
    "ValidationError",
    "QsdBase",
    "QsdSpec",
    "qsd_to_native",
    "alpha_of_lambda",
    "calibrate",
    "full_report",
    "lambda_of_alpha",
]
