"""Exception taxonomy shared by all latentcast modules."""


class LatentcastError(Exception):
    """Base class for all library errors."""


class DataError(LatentcastError):
    """A problem with input data or files (CLI exit code 2)."""


class FormatError(DataError):
    """Malformed container or image file."""


class UnsupportedDtypeError(DataError):
    """Array file declares an element type outside the supported set."""


class TruncationError(DataError):
    """Array file payload is shorter than the declared shape requires."""


class InconsistentSequenceError(DataError):
    """Frames of one sequence disagree on dimensions."""


class GapError(DataError):
    """Frame directory is missing an index in the run 0..n-1."""


class InsufficientDataError(DataError):
    """Too few sequences for the requested split."""


class TooShortError(DataError):
    """Sequence has fewer frames than the standardization target."""


class ChannelError(DataError):
    """Operation requires a different channel count."""


class SubsetSizeError(DataError):
    """Requested subset exceeds the available population."""


class ShapeError(LatentcastError):
    """Array shapes do not line up for an operation or layer."""


class ConfigError(LatentcastError):
    """Invalid model or grid configuration."""


class WindowError(LatentcastError):
    """Sequence too short for the requested input window."""


class FoldError(LatentcastError):
    """K-fold request incompatible with the number of sequences."""


class GridError(ConfigError):
    """Hyperparameter grid has an empty axis."""


class DegenerateStatsError(LatentcastError):
    """Latent statistics contain a zero or negative standard deviation."""


class DegenerateRangeError(LatentcastError):
    """All scores are equal; interval bucketing is undefined."""


class LeakageError(LatentcastError):
    """A test-partition sequence reached a training or selection stage."""


class TrainingAbortError(LatentcastError):
    """Training hit a non-finite loss or gradient (CLI exit code 3)."""


class NonFiniteGradientError(TrainingAbortError):
    """A gradient became NaN or infinite during an optimizer step."""


class CheckpointError(LatentcastError):
    """Checkpoint directory is missing files or inconsistent."""
