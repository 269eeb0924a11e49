"""Exception types raised across the package."""


class GenOjaError(Exception):
    """Base class for all package errors."""


class NonPositiveDefinite(GenOjaError):
    pass


class DegenerateDirection(GenOjaError):
    pass


class InternalConsistencyError(GenOjaError):
    pass


class InvalidDimension(GenOjaError):
    pass


class InvalidCovariance(GenOjaError):
    pass


class InvalidSchedule(GenOjaError):
    pass


class NumericalDivergence(GenOjaError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class NotStarted(GenOjaError):
    pass


class StepOutOfRange(GenOjaError):
    pass


class NotFittable(GenOjaError):
    pass


class ConfigError(GenOjaError):
    pass
