"""Exception types raised by the solver, dynamics and I/O layers."""


class ArrivalGameError(Exception):
    """Base class for package errors."""


class InvalidParameters(ArrivalGameError, ValueError):
    pass


class StepTooCoarse(ArrivalGameError, ValueError):
    """The explicit Euler step would produce negative probabilities."""


class NoInteriorArrivals(ArrivalGameError):
    """The equilibrium puts all mass at time zero within the horizon."""


class ClosingTimeTooEarly(ArrivalGameError):
    """The closing time precedes the start of the interior support."""


class NonConvergence(ArrivalGameError):
    pass


class NoIncreaseObserved(ArrivalGameError):
    """No day shows an increase of the queue between two sampling times."""
