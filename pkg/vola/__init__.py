"""Mean-volatility risk-averse policy optimization."""

__version__ = "0.1.0"

from .errors import (ContractViolation, NumericalError, TheoremViolation, UnsupportedConfiguration,
                     ValidationError, VolaError)

__all__ = [
    "__version__",
    "ContractViolation",
    "NumericalError",
    "TheoremViolation",
    "UnsupportedConfiguration",
    "ValidationError",
    "VolaError",
]
