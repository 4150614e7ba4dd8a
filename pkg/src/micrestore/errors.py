"""Exception hierarchy shared across the package."""


class MicrestoreError(Exception):
    """Base class for all package errors."""


class ValidationError(MicrestoreError, ValueError):
    """Invalid user-supplied configuration or arguments (CLI exit code 1)."""


class ArgumentError(ValidationError):
    """An argument is outside its permitted range."""


class DimensionError(ValidationError):
    """Tensor or image shapes do not satisfy an operation's contract."""


class FormatError(MicrestoreError):
    """A file does not follow its byte-level format."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class StateError(MicrestoreError, RuntimeError):
    """An object is used in a state that does not permit the call."""


class DataError(MicrestoreError):
    """A dataset or manifest cannot support the requested work."""


class EvaluationError(MicrestoreError, ArithmeticError):
    """A function evaluated to a non-finite value."""


class NonFiniteError(EvaluationError):
    """NaN or Inf produced during a forward or backward pass."""
