"""Exception hierarchy shared by every palsim module."""


class PalsimError(Exception):
    """Base class for all library errors."""


class InvalidArgument(PalsimError, ValueError):
    pass


class InvalidParams(PalsimError, ValueError):
    """ISP or recipe parameters violate their invariants."""


class OutOfRange(PalsimError, ValueError):
    pass


class DegenerateModel(PalsimError):
    """Camera model produces a zero radius where a finite one is required."""


class PrescriptionIncomplete(PalsimError):
    """A (fov, wavelength) coefficient cell is missing."""


class ConfigurationError(PalsimError):
    pass


class EdgeNotFound(PalsimError):
    pass


class SourceTooSmall(PalsimError):
    pass


class SamplingError(PalsimError):
    """The pupil grid cannot cover the requested image-plane window.

    Attributes:
        min_grid: smallest power-of-two pupil grid that would satisfy the
            sampling relation at the requested pixel pitch and support.
    """

    def __init__(self, message, min_grid):
        super().__init__(f"{message} (minimum grid size: {min_grid})")
        self.min_grid = min_grid
