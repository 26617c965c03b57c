"""Exception types shared across the package."""


class ArbiLoModError(Exception):
    """Base class for all errors raised by this package."""


class GeometryResolutionError(ArbiLoModError):
    """The mesh cannot resolve a rectangle edge or a domain boundary."""


class LinearSolverError(ArbiLoModError):
    """A sparse solve did not reach the required residual tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class LocalSolverError(ArbiLoModError):
    """A local extension/patch system could not be solved."""


class TrainingError(ArbiLoModError):
    """A local training failed; carries the space identifier."""

    def __init__(self, message, xi=None):
        super().__init__(message)
        self.xi = xi


class ConditioningError(ArbiLoModError):
    """A reduced or greedy system became numerically singular."""


class StalenessError(ArbiLoModError):
    """Reduced data from different geometry revisions was mixed."""


class SessionLoadError(ArbiLoModError):
    """A session file is malformed or has an incompatible version."""
