"""Exception types raised by glfgp."""


class GlfError(Exception):
    """Base class for all library errors."""


class InvalidArgument(GlfError, ValueError):
    pass


class CapacityError(GlfError, MemoryError):
    pass


class BoundFailure(GlfError, ArithmeticError):
    """A parameter bound could not be computed (e.g. no root in bracket)."""


class UnsupportedAnalyticity(GlfError, NotImplementedError):
    """No polyellipse constants are available for this kernel family."""


class UnsupportedFamily(GlfError, NotImplementedError):
    pass


class ConditioningError(GlfError, ArithmeticError):
    """A factorization failed or a weight underflowed beyond recovery."""


class OptimizationError(GlfError, RuntimeError):
    """The objective is unusable at the starting point."""
