"""Exception types raised by the numerical routines."""


class ModelError(Exception):
    """Base class for all dtfim failures."""


class InvalidParams(ModelError, ValueError):
    pass


class DegenerateDenominator(ModelError):
    pass


class NoPhysicalRoot(ModelError):
    def __init__(self, message, roots=()):
        super().__init__(message)
        self.roots = tuple(roots)


class NonFinite(ModelError):
    pass


class SingularLyapunov(ModelError):
    pass


class ImaginaryLeak(ModelError):
    pass


class NotPSD(ModelError):
    pass


class ZeroBlochVector(ModelError):
    pass


class TooLarge(ModelError):
    pass


class DegenerateSteadyState(ModelError):
    pass
