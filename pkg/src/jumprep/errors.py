class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class NumericalError(ArithmeticError):
    """A numerical evaluation produced non-finite or unusable values."""


class ConfigurationError(ValueError):
    """A model or run configuration cannot be honoured."""
