class ContractViolation(ValueError):
    """Inputs break a documented precondition (inconsistent F/z, bad labels, ...)."""


class NumericDegeneracyError(ArithmeticError):
    """A matrix that must be positive definite could not be factorized."""

    def __init__(self, message, behavior=None):
        super().__init__(message)
        self.behavior = behavior


class DataLoadError(ValueError):
    """Input data file could not be parsed or validated."""


class ConfigError(ValueError):
    """Run configuration is invalid."""
