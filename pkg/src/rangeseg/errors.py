"""Exception hierarchy shared by the pipeline.

Exit-code mapping used by the CLI: usage errors exit 1, data errors exit 2,
configuration/weight errors exit 3.
"""


class RangesegError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class DataError(RangesegError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class MalformedFileError(DataError):
    """A scan or label file violates the on-disk format."""


class DegeneratePointError(DataError):
    """A point with zero range cannot be projected."""


class InputError(DataError):
    """Runtime inputs (arrays, shapes, lengths) are inconsistent."""


class ConfigError(RangesegError):
    """Invalid configuration, network definition, or weight file."""

    exit_code = 3


class ConfigurationError(ConfigError):
    """Layer/graph/shape configuration is inconsistent."""


class WeightFormatError(ConfigError):
    """Weight file or manifest does not match the expected format."""


class CalibrationError(ConfigError):
    """Quantization calibration cannot proceed."""


class StageError(RangesegError):
    """Wraps a failure inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 2)
