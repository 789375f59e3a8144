"""Exception hierarchy shared by every pipeline stage.

The command line maps each family to an exit code: configuration problems
exit with 2, bad or inconsistent data with 3, numerical failures with 4.
"""


class ShapeCompletionError(Exception):
    exit_code = 1


class ConfigError(ShapeCompletionError):
    exit_code = 2


class MissingArtifactError(ConfigError):
    """A checkpoint, index or grid a stage depends on does not exist."""


class DataError(ShapeCompletionError):
    exit_code = 3


class KindError(DataError, ValueError):
    """A grid of the wrong kind was passed (e.g. ternary requested from an unsigned DF)."""


class ShapeError(DataError, ValueError):
    pass


class GridRangeError(DataError, IndexError):
    pass


class EmptyInputError(DataError, ValueError):
    pass


class NumericError(ShapeCompletionError):
    exit_code = 4
