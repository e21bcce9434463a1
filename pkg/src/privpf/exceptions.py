"""Exception hierarchy shared across the package."""


class PrivPFError(Exception):
    """Base class for all package errors."""


class DomainError(PrivPFError, ValueError):
    """A distribution or mechanism parameter is outside its domain."""


class CapacityError(PrivPFError):
    """Dense materialization would exceed the configured cell budget."""


class CoverageError(PrivPFError):
    """An enumeration window does not capture enough probability mass."""


class ConfigurationError(PrivPFError, ValueError):
    """Incompatible options, e.g. a sampler mode fed the wrong kind of data."""


class ImpossibleStateError(PrivPFError):
    """A positive count was assigned to a cell with zero total rate."""


class NumericalFailureError(PrivPFError, FloatingPointError):
    """A NaN or infinity appeared in the sampler state."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class FormatError(PrivPFError, ValueError):
    """A file does not conform to its declared format."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
