class AgroError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(AgroError, ValueError):
    """Invalid parameter, size or precondition."""


class ShapeError(AgroError, ValueError):
    """Array dimensions do not agree."""


class NumericError(AgroError, ArithmeticError):
    """Non-finite values or a broken numeric invariant during training."""


class MissingArtifactError(AgroError, FileNotFoundError):
    """One or more input artifacts of a pipeline stage are not on disk.

    Parameters
    ----------
    missing: list of str
        Paths that were expected but not found
    """

    def __init__(self, missing):
        self.missing = [str(m) for m in missing]
        super(MissingArtifactError, self).__init__(
            "missing input: {}".format(", ".join(self.missing))
        )


class DegenerateAssignmentWarning(UserWarning):
    """The grouper put (almost) every example into one group."""


class SliceUnderflowWarning(UserWarning):
    """Every slice had zero posterior density for some example."""


class EmptySliceWarning(UserWarning):
    """A slice lost all its mass during EM and was re-seeded."""
