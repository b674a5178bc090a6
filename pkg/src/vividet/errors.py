"""Exception types shared across the package."""


class VividetError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(VividetError):
    """Operands or configuration have incompatible shapes."""


class NumericsError(VividetError):
    """An operation produced NaN/Inf, or a numeric contract was violated."""


class TapeError(VividetError):
    """Misuse of the gradient tape (non-scalar loss, loss not on tape, ...)."""


class FormatError(VividetError):
    """A file or stream does not conform to its documented format."""


class ConfigError(VividetError):
    """Invalid configuration value or config-file syntax."""


class DivergenceError(VividetError):
    """Training produced a non-finite loss."""
