"""Exception hierarchy shared by every module."""


class GLGNNError(Exception):
    """Base class for all errors raised by the package."""


class DimensionError(GLGNNError, ValueError):
    pass


class ConfigError(GLGNNError, ValueError):
    pass


class ContractError(GLGNNError, RuntimeError):
    """A call violated an operation's precondition (wrong loss shape, empty mask, ...)."""


class EmptyInputError(GLGNNError, ValueError):
    pass


class UndefinedMetricError(GLGNNError, ValueError):
    pass


class DataError(GLGNNError):
    """Anything wrong with on-disk data. The CLI maps this family to exit code 3."""


class LoadError(DataError):
    pass


class ParseError(DataError):
    pass


class IntegrityError(DataError):
    pass


class SplitError(DataError):
    pass


class NumericError(GLGNNError, ArithmeticError):
    pass
