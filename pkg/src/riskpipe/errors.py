"""Exception hierarchy.

Two families map onto CLI exit codes: ``ValidationError`` (bad input, exit 1)
and ``ModelError`` (numerically or structurally unsolvable model, exit 2).
"""


class RiskPipeError(Exception):
    pass


class ValidationError(RiskPipeError, ValueError):
    """Invalid configuration or input data."""


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(ValidationError):
    """Input parsed but violates a format-level invariant."""


class TransformError(ValidationError):
    """Behavioral profile and risk data cannot be combined."""


class TrainingError(ValidationError):
    pass


class ModelError(RiskPipeError):
    """A risk model that cannot be solved (cycles, empty gates, no absorption)."""


class NumericError(ModelError):
    pass


class CapacityError(ModelError):
    pass
