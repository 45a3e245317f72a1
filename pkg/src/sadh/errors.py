"""Exception types shared across the package."""


class SadhError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(SadhError, ValueError):
    pass


class DegenerateVectorError(SadhError, ValueError):
    """A zero-norm vector reached an operation that needs a direction."""


class DomainError(SadhError, ValueError):
    pass


class DataError(SadhError, ValueError):
    """Problems with dataset contents or files."""


class MalformedRowError(DataError):
    pass


class LabelValueError(DataError):
    pass


class RowCountMismatchError(DataError):
    pass


class EmptyLabelError(DataError):
    """A label row has no positive entry."""


class InsufficientItemsError(DataError):
    pass


class MissingEntryError(SadhError, KeyError):
    """A label vector has no entry in the semantic dictionary."""

    def __str__(self) -> str:  # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class NumericError(SadhError, ArithmeticError):
    """Non-finite loss or gradient during training or checking."""


class ConfigError(SadhError, ValueError):
    pass
