"""Exception hierarchy shared by every olaq module."""


class OlaqError(Exception):
    """Base class for all library errors."""


class InvalidInput(OlaqError, ValueError):
    """Input tensor contains NaN/Inf or is otherwise malformed."""


class NonFinite(InvalidInput):
    pass


class ConfigError(OlaqError, ValueError):
    """Unsupported bit-width, mode or other configuration value."""


class ShapeError(OlaqError, ValueError):
    pass


class MaskMismatch(OlaqError, ValueError):
    """Weight support does not line up with an outlier mask."""


class MissingCache(OlaqError, RuntimeError):
    pass


class DegenerateVariance(OlaqError, ArithmeticError):
    pass


class EmptyComponent(OlaqError, ValueError):
    """One side of a threshold split holds fewer than two samples."""


class DataError(OlaqError, ValueError):
    pass


class FormatError(OlaqError, ValueError):
    """Binary container is truncated or has a bad header."""
