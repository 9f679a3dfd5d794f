"""Exception hierarchy shared by every SKIPNet module.

Each error carries the process exit code the CLI maps it to: 2 for usage,
configuration and data problems, 1 for a failed numerical check.
"""


class SkipnetError(Exception):
    """Base class for all SKIPNet errors."""

    exit_code: int = 2


class DimensionError(SkipnetError, ValueError):
    """Tensor shapes do not line up; the message names the offending axes."""


class ConfigurationError(SkipnetError, ValueError):
    """A hyperparameter combination cannot be executed."""


class UsageError(SkipnetError, ValueError):
    """An API was called outside its contract."""


class NumericError(SkipnetError, ArithmeticError):
    """A NaN or infinity appeared in a forward value or a gradient."""


class DataError(SkipnetError, ValueError):
    """A manifest, image or label could not be used."""


class SplitError(DataError):
    """A patient-level split could not populate every class in every split."""


class CheckpointError(DataError):
    """A checkpoint file could not be read."""


class NotACheckpointError(CheckpointError):
    """The file does not start with the checkpoint magic bytes."""


class CheckpointVersionError(CheckpointError):
    """The checkpoint was written by an unsupported format version."""


class CheckpointCorruptError(CheckpointError):
    """The trailing CRC32 does not match the file contents."""


class CheckpointShapeError(CheckpointError):
    """A stored tensor disagrees with the architecture it claims to belong to."""


class TrainingError(SkipnetError, RuntimeError):
    """Training diverged (non-finite loss)."""


class CheckFailure(SkipnetError):
    """A numerical check ran to completion and breached its threshold."""

    exit_code = 1
