"""Exception types shared across the toolkit."""


class FormatError(ValueError):
    """File bytes do not match the expected layout (bad magic, bad header)."""


class TruncationError(FormatError):
    """Payload is shorter than the header promises."""


class DataError(ValueError):
    """Samples are non-finite or outside the documented range."""


class DegenerateInputError(DataError):
    """Input is well-formed but unusable (all-zero raster, constant map)."""


class ParameterError(ValueError):
    """Invalid argument: even window, mismatched dimensions, bad range."""


class ShapeError(ParameterError):
    """Array shapes do not satisfy the operation's contract."""


class TrainingDivergedError(ArithmeticError):
    """Loss became non-finite during optimization."""
