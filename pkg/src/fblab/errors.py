"""Exception types raised across the package."""


class FBLabError(Exception):
    """Base class for all package errors."""


class NonManifold(FBLabError):
    pass


class InconsistentOrientation(FBLabError):
    pass


class DegenerateTriangle(FBLabError):
    pass


class InsufficientNeighborhood(FBLabError):
    pass


class ProjectionDiverged(FBLabError):
    pass


class NotStrictlyConvex(FBLabError):
    pass


class BoundViolation(FBLabError):
    pass


class MaxIterationsExceeded(FBLabError):
    pass


class MeshDegenerated(FBLabError):
    pass


class ConvergenceFailure(FBLabError):
    pass


class AmbiguousIndex(FBLabError):
    def __init__(self, msg, eigenvalues=None):
        super().__init__(msg)
        self.eigenvalues = eigenvalues


class WrongTopology(FBLabError):
    pass


class NonProper(FBLabError):
    pass


class ZeroOnBoundary(FBLabError):
    pass


class NoConvergence(FBLabError):
    def __init__(self, msg, best_residual=None, best_point=None):
        super().__init__(msg)
        self.best_residual = best_residual
        self.best_point = best_point


class MassConcentrated(FBLabError):
    pass


class HypothesisFails(FBLabError):
    pass


class IndexNotOne(FBLabError):
    pass


class BadConfig(FBLabError):
    pass


class MissingArtifacts(FBLabError):
    pass
