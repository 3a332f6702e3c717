"""Exception types shared across the package."""


class SuspflowError(Exception):
    """Base class for all package-specific errors."""


class SingularInput(SuspflowError):
    """A point fell inside the singularity guard of the map."""


class OutOfDomain(SuspflowError):
    """A point lies outside the map's domain by more than the clamp slack."""


class HitSingularity(SuspflowError):
    """An orbit entered the singularity guard before finishing.

    The ``index`` attribute holds the iterate at which the orbit aborted.
    """

    def __init__(self, index: int, message: str | None = None):
        self.index = index
        super().__init__(message or f"orbit entered the singularity guard at iterate {index}")


class TooManyAborted(SuspflowError):
    """More than the tolerated fraction of orbits aborted during estimation."""


class DegenerateRoof(SuspflowError):
    """Estimated mean roof fell below half its lower bound; indicates a bug."""


class InsufficientData(SuspflowError):
    """Too few usable horizons to fit a decay rate."""


class ConfigInvalid(SuspflowError):
    """A run configuration failed validation."""


class NonFinite(SuspflowError):
    """An ODE state overflowed or became NaN during integration."""


class NoReturn(SuspflowError):
    """No section crossing was found within the allotted time."""


class LeftTrap(SuspflowError):
    """A trajectory exited the trapping box during a section search."""


class TraceNotFound(SuspflowError):
    """Wing-classification bisection failed to locate the stable-manifold trace."""


class NonUniqueMeasure(UserWarning):
    """Cross-orbit spread of Birkhoff averages is larger than sampling noise explains.

    Warns that independent long orbits disagree beyond what a single
    absolutely continuous invariant measure would produce.
    """
