"""Exception types raised by tcbo."""


class TCBOError(Exception):
    """Base class for all tcbo errors."""


class InvalidInputError(TCBOError, ValueError):
    pass


class DimensionMismatchError(InvalidInputError):
    pass


class ModelParseError(InvalidInputError):
    """Malformed model file. Carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedStructureError(TCBOError):
    pass


class InvalidCountingNumbersError(TCBOError, ValueError):
    pass


class ScheduleError(TCBOError):
    pass


class NotAReparameterizationError(TCBOError):
    pass


class NotATreeError(TCBOError, ValueError):
    pass


class StateSpaceTooLargeError(TCBOError):
    pass
