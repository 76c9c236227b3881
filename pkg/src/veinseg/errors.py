"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: configuration problems exit with 2,
numeric failures with 3, I/O problems with 4.
"""


class VeinSegError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(VeinSegError, ValueError):
    """Invalid configuration or violated precondition."""


class ShapeError(ConfigError):
    """Tensor or raster dimensions do not fit the operation."""


class NumericError(VeinSegError, ArithmeticError):
    """A NaN or infinite value appeared, or training diverged."""


class FormatError(VeinSegError, ValueError):
    """Malformed or unsupported on-disk data."""


class CheckpointError(FormatError):
    """Checkpoint bytes cannot be applied to a model."""


class CheckpointTruncated(CheckpointError):
    pass


class CheckpointVersionMismatch(CheckpointError):
    pass


class CheckpointUnknownName(CheckpointError):
    pass


class CheckpointMissingName(CheckpointError):
    pass


class CheckpointShapeMismatch(CheckpointError):
    pass
