"""Exception hierarchy shared by every module of the package."""


class SensorSelectError(Exception):
    """Base class for all package errors."""


class InvalidMatrix(SensorSelectError, ValueError):
    """A matrix is empty, not two-dimensional, or has non-finite entries."""


class DimensionMismatch(SensorSelectError, ValueError):
    pass


class InvalidArgument(SensorSelectError, ValueError):
    pass


class UnstableSystem(SensorSelectError):
    """The state matrix has spectral radius too close to (or above) one."""


class UndetectablePair(SensorSelectError):
    """The pair (A, C) has an unstable mode that C cannot see."""


class NoConvergence(SensorSelectError):
    pass


class InvalidNetwork(SensorSelectError, ValueError):
    pass


class BudgetExceeded(SensorSelectError):
    """The requested search would exceed the configured enumeration cap."""

    def __init__(self, message, growth_estimate=None):
        super().__init__(message)
        self.growth_estimate = growth_estimate
