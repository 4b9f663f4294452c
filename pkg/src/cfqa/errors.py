"""Exception types shared across the package."""


class CfqaError(Exception):
    """Base class for all package errors."""


class ShapeError(CfqaError):
    """Operands have incompatible shapes."""


class ConfigError(CfqaError):
    """A configuration value is invalid or infeasible."""


class ContractError(CfqaError):
    """An internal precondition was violated by the caller."""


class DataError(CfqaError):
    """A dataset file is malformed or does not match the schema."""


class ExcisionEmptyError(CfqaError):
    """Removing the span would leave an empty document."""
