"""Exception hierarchy shared by all anisosyn modules."""


class AnisosynError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(AnisosynError, ValueError):
    pass


class UnstableMatrix(AnisosynError, ValueError):
    pass


class UnstableSystem(UnstableMatrix):
    pass


class NonSymmetric(AnisosynError, ValueError):
    pass


class NumericalFailure(AnisosynError, ArithmeticError):
    pass


class SingularInnovation(NumericalFailure):
    pass


class NotSquare(DimensionMismatch):
    pass


class InvalidArgs(AnisosynError, ValueError):
    pass


class ModelError(AnisosynError, ValueError):
    """Malformed SDP model, detected before any solver call."""


class SolverFailure(AnisosynError, RuntimeError):
    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class InfeasibleInitial(AnisosynError, RuntimeError):
    """The k = 0 problem of the CCL iteration has no solution."""


class MaxIterations(AnisosynError, RuntimeError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations or []


class GainInfeasible(AnisosynError, RuntimeError):
    def __init__(self, message, lam=None):
        super().__init__(message)
        self.lam = lam


class ParseError(AnisosynError, ValueError):
    pass


class InvalidPoint(AnisosynError, ValueError):
    pass
