"""Exception types shared across the package."""


class PushforwardError(Exception):
    """Base class for all package errors."""


class InvalidPointError(PushforwardError):
    """A point does not belong to the model space (wrong shape or out of range)."""


class ParameterError(PushforwardError):
    """An operation was called with an out-of-range or malformed parameter."""


class SpaceMismatchError(PushforwardError):
    """Two objects that must live on the same model space do not."""


class DimensionError(PushforwardError):
    """Vector or matrix dimensions do not match."""


class UnsupportedSystemError(PushforwardError):
    """The operation is not defined for this system or space kind."""


class EscapeError(PushforwardError):
    """A point was mapped outside the truncation window of the shift system."""


class NotPeriodicError(PushforwardError):
    """The claimed periodic orbit does not close within tolerance."""


class ConvergenceError(PushforwardError):
    """An iterative procedure exhausted its iteration cap above tolerance."""


class EstimateInvalidError(PushforwardError):
    """An entropy estimate could not be formed (all scales saturated)."""
