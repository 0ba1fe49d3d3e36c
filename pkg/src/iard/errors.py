"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid user-supplied configuration (bad sizes, ranges or policies)."""


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class IllConditionedError(ArithmeticError):
    """A linear system is numerically singular.

    ``condition`` carries the estimated condition number when one is known.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition
