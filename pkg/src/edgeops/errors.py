"""Exception taxonomy shared across the package."""


class EdgeOpsError(Exception):
    """Base class for all edgeops errors."""


class InvalidArgumentError(EdgeOpsError, ValueError):
    """An argument violates a documented precondition."""


class OutOfRangeError(EdgeOpsError, ValueError):
    """A time/coordinate falls outside the range a path or grid covers."""


class WindowTooShortError(EdgeOpsError):
    """The simulation window is too short for the requested construction."""


class NearEigenvalueError(EdgeOpsError):
    """A boundary-value denominator is numerically zero: the truncated
    problem sits on an eigenvalue."""


class InvalidStateError(EdgeOpsError):
    """An object is not in a state that supports the requested operation."""


class HardEigenvalueCollisionError(EdgeOpsError):
    """The hard-edge diffusion exploded inside the guarded window, i.e. the
    shift is (numerically) an eigenvalue and the inverse kernel is not
    defined for this realization."""


class IndeterminateCountError(EdgeOpsError):
    """Eigenvalue counting ended with the diffusion outside its settling
    band; the count may still change beyond the window.

    The partial count is available as ``partial_count``.
    """

    def __init__(self, message, partial_count=None):
        super().__init__(message)
        self.partial_count = partial_count


class UndefinedInverseError(EdgeOpsError):
    """An eigenvalue too close to zero makes the inverse-eigenvalue metric
    undefined."""
