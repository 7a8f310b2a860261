"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Wrong number of axes, or axis sizes that do not match."""


class ValueRangeError(ValueError):
    """Values outside the expected range, or non-finite values."""


class DegenerateInputError(ValueError):
    """Input is numerically degenerate (e.g. mean intensity ~ 0)."""


class DatasetError(ValueError):
    """On-disk light field directory is missing files or inconsistent."""


class WeightFormatError(ValueError):
    """Weight file is corrupt, truncated, or incompatible with the model."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""
