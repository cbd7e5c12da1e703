"""Exception types shared across the package."""


class FogError(Exception):
    pass


class ConfigurationError(FogError, ValueError):
    pass


class ParseError(FogError, ValueError):
    pass


class ValidationError(FogError, ValueError):
    pass


class ContractError(FogError, ValueError):
    """A precondition of an operation was violated by the caller."""


class ShapeError(ContractError):
    pass


class DomainError(ContractError):
    pass


class DataError(FogError, ValueError):
    pass


class IntegrityError(FogError):
    pass


class CompatibilityError(FogError):
    pass


class UndefinedMetricError(FogError, ValueError):
    """A statistic is undefined for the given input (e.g. a single class)."""
