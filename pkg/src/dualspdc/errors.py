"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    pass


class SellmeierRangeError(ValueError):
    """Wavelength or temperature outside a coefficient set's validity window."""


class NoPhaseMatchError(RuntimeError):
    """Raised when the mismatch has no sign change inside the search bracket."""


class UndefinedVisibilityError(ArithmeticError):
    pass


class UndefinedCorrelationError(ArithmeticError):
    pass


class ConfigError(ValueError):
    pass
