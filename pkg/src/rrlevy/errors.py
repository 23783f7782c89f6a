"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Malformed model, request or run configuration."""


class DomainError(ValueError):
    """Argument outside the domain where a quantity is defined."""


class NumericalError(ArithmeticError):
    """A numerical routine produced a non-finite or inconsistent value."""


class RootFindingError(NumericalError):
    """Bracketing or root polishing failed."""

    def __init__(self, message: str, bracket: tuple[float, float] | None = None):
        if bracket is not None:
            message = f"{message} (bracket=[{bracket[0]!r}, {bracket[1]!r}])"
        super().__init__(message)
        self.bracket = bracket
