"""Exception types raised across the package."""


class MMDError(ValueError):
    """Base class for all package errors."""


class MomentUndefined(MMDError):
    pass


class DimensionMismatch(MMDError):
    pass


class DegenerateData(MMDError):
    pass


class MissingData(MMDError):
    pass


class TooFewPairs(MMDError):
    pass


class DegenerateVariance(MMDError):
    pass


class DomainError(MMDError):
    pass


class QuadratureNonConvergence(MMDError):
    pass


class ConfigInvalid(MMDError):
    pass


class NonPositiveValue(MMDError):
    pass


class ParseError(MMDError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class RaggedRows(ParseError):
    pass
