class LtpError(Exception):
    """Base class for every error raised by ltplab."""


class ShapeError(LtpError, ValueError):
    pass


class GradientError(LtpError):
    pass


class EncoderError(LtpError):
    pass


class PruningError(LtpError, ValueError):
    pass


class TrainingDivergedError(LtpError):
    """Raised on a non-finite loss. Carries the report collected so far."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class DataGenError(LtpError, ValueError):
    pass


class FlopsError(LtpError, ValueError):
    pass


class CheckpointError(LtpError):
    pass


class ConfigError(LtpError):
    pass


class UsageError(LtpError):
    pass


class SweepError(LtpError):
    """One or more sweep points failed at run time."""
