"""Exception types raised across the package."""


class DynPercError(ValueError):
    """Base class for all input/contract errors."""


class EmptyTree(DynPercError):
    pass


class CycleDetected(DynPercError):
    pass


class DisconnectedVertex(DynPercError):
    pass


class BudgetExceeded(DynPercError):
    pass


class NotALeaf(DynPercError):
    pass


class EmptySpec(DynPercError):
    pass


class ReversedInterval(DynPercError):
    pass


class EmptyDigitSet(DynPercError):
    pass


class ResolutionTooCoarse(DynPercError):
    pass


class DegenerateScales(DynPercError):
    pass


class ZeroTimeGap(DynPercError):
    pass


class SingularDiagonal(DynPercError):
    pass


class NotASimplex(DynPercError):
    pass


class MissingGenerator(DynPercError):
    pass


class DimensionMismatch(DynPercError):
    pass


class OrderViolation(DynPercError):
    pass


class MismatchedRun(DynPercError):
    pass


class HorizonExceeded(DynPercError):
    pass


class NoHits(DynPercError):
    pass


class ConfigInvalid(DynPercError):
    pass


class NotConverged(RuntimeWarning):
    """Warning category: the optimizer hit max_iter before reaching tol."""
