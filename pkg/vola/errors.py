"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class VolaError(Exception):
    """Base class for every error raised by the vola package"""

    exit_code = 1


class ValidationError(VolaError, ValueError):
    """Invalid input, configuration or data row"""

    exit_code = 1


class ContractViolation(ValidationError):
    """An environment or policy was used outside its contract"""


class UnsupportedConfiguration(ValidationError):
    """The requested combination of policy, environment and method is not supported"""


class NumericalError(VolaError, ArithmeticError):
    """Singular solves, non-finite gradients or objectives"""

    exit_code = 2


class TheoremViolation(VolaError):
    """A gating verification suite failed"""

    exit_code = 3

    def __init__(self, message: str, failed: list[str] | None = None):
        super().__init__(message)
        self.failed = failed or []
