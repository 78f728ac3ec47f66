"""Exception types raised by the solvers and file readers."""


class FrostGMsError(Exception):
    """Base class for package errors."""


class ConfigurationError(FrostGMsError, ValueError):
    pass


class AssemblyError(FrostGMsError):
    pass


class ConstraintConflictError(FrostGMsError, ValueError):
    pass


class SolverError(FrostGMsError):
    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (residual {residual:.3e})")
        self.residual = residual


class DecompositionError(SolverError):
    pass


class RankDeficiencyError(SolverError):
    pass


class UndefinedNormError(FrostGMsError, ZeroDivisionError):
    pass


class ComparisonError(FrostGMsError, ValueError):
    pass


class CacheError(FrostGMsError):
    pass
