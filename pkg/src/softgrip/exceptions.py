"""Exception hierarchy shared by all softgrip modules."""


class SoftGripError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(SoftGripError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateCircleError(InvalidInputError):
    """Three markers are (numerically) collinear, i.e. the finger is straight."""


class DegenerateLoopError(SoftGripError):
    """The closed-loop characteristic polynomial is identically zero."""


class UnstableLoopError(SoftGripError):
    """The final value theorem does not apply because the loop is unstable."""


class UnidentifiableError(SoftGripError):
    """The regressor matrix is rank deficient (e.g. constant excitation)."""


class InvalidStateError(SoftGripError):
    """An operation was requested in a state where it is not defined."""


class ScenarioTimeoutError(SoftGripError):
    """A finger never reached contact within the scenario duration."""


class ScenarioInvariantError(SoftGripError):
    """A scenario produced a trajectory that violates one of its invariants."""
