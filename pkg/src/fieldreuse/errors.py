"""Exception hierarchy.

Every library error derives from :class:`FieldReuseError`. Validation
problems (bad input shapes, parameters, configs) derive from
:class:`ValidationError` and numerical breakdowns from :class:`NumericError`,
which lets the CLI map them to distinct exit codes.
"""


class FieldReuseError(Exception):
    """Base class for all package errors."""


class ValidationError(FieldReuseError, ValueError):
    """Input failed a precondition."""


class EmptyStream(ValidationError):
    pass


class FramingError(ValidationError):
    pass


class LengthError(ValidationError):
    pass


class UnsupportedOrder(ValidationError):
    pass


class RangeError(ValidationError):
    pass


class ParamError(ValidationError):
    pass


class FrequencyError(ValidationError):
    pass


class InsufficientSamples(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class ParseError(ConfigError):
    """Malformed config text; carries the 1-based ``line`` and ``col``."""

    def __init__(self, msg, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            msg = f"{msg} (line {line}, column {col})"
        super().__init__(msg)


class NumericError(FieldReuseError, ArithmeticError):
    """A computation produced non-finite or otherwise unusable values."""


class SingularChannel(NumericError):
    pass


class SingularFit(NumericError):
    pass


class DegenerateDistribution(NumericError):
    pass


class ModelError(NumericError):
    pass
