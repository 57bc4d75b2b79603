"""Exception hierarchy shared by every vibegen module."""


class VibeGenError(Exception):
    """Base class for all package errors."""


class DimensionError(VibeGenError, ValueError):
    pass


class ConfigurationError(VibeGenError, ValueError):
    pass


class DegenerateStatisticsError(VibeGenError, ValueError):
    pass


class DataError(VibeGenError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DatasetTooSmallError(DataError):
    pass


class NonFiniteError(VibeGenError, FloatingPointError):
    pass


class TrainingDivergenceError(NonFiniteError):
    """Raised when a loss or gradient stops being finite.

    ``checkpoint`` holds the path of the last checkpoint written before the
    failure, or None when nothing was saved yet.
    """

    def __init__(self, message: str, checkpoint=None):
        if checkpoint is not None:
            message = f"{message} (last good checkpoint: {checkpoint})"
        super().__init__(message)
        self.checkpoint = checkpoint


class CheckpointFormatError(VibeGenError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset
