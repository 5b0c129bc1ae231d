"""Exception types raised by psoc."""


class PsocError(Exception):
    """Base class for all psoc errors."""


class NonConvergence(PsocError):
    pass


class WeightVanishesAtNode(PsocError, ValueError):
    pass


class WrongFamily(PsocError, ValueError):
    pass


class DegenerateHorizon(PsocError, ValueError):
    pass


class InfinityRequested(PsocError, ValueError):
    pass


class DimensionMismatch(PsocError, ValueError):
    pass


class InvalidSmoothness(PsocError, ValueError):
    pass


class IncompatiblePairing(PsocError, ValueError):
    pass


class NegativeWeights(PsocError, ValueError):
    pass


class NotConverged(PsocError):
    pass


class EvaluationError(PsocError, ArithmeticError):
    """A user callback returned a non-finite value."""


class MissingDuals(PsocError):
    pass


class IdMismatch(PsocError, ValueError):
    pass


class IndexOutOfRange(PsocError, IndexError):
    pass
