"""Exception hierarchy shared by all modules."""


class GeometryError(Exception):
    """Base class for every error raised by the toolkit."""


# norms
class NonUnitInput(GeometryError):
    pass


class PositivityViolation(GeometryError):
    def __init__(self, message, xi=None, value=None):
        super().__init__(message)
        self.xi = xi
        self.value = value


class DerivativeFailure(GeometryError):
    pass


class ZeroVector(GeometryError):
    pass


class MaximizerNotConverged(GeometryError):
    def __init__(self, message, best_value=None, residual=None):
        super().__init__(message)
        self.best_value = best_value
        self.residual = residual


class NotAdmissibleShift(GeometryError):
    pass


# wedge
class TangencyError(GeometryError):
    pass


class KVectorNotFound(GeometryError):
    """No admissible k exists; ``min_dual`` is the smallest F°(k) on the affine set."""

    def __init__(self, message, min_dual):
        super().__init__(message)
        self.min_dual = min_dual


class OptimizerNotConverged(GeometryError):
    pass


# surfaces
class EmptyIntersection(GeometryError):
    pass


class ChartFailure(GeometryError):
    pass


class UntaggedEdge(GeometryError):
    pass


class ImmersionLost(GeometryError):
    pass


class OpenSurface(GeometryError):
    pass


class BoundaryEscape(GeometryError):
    pass


# curvature
class ComplexEigenvalues(GeometryError):
    pass


# verify
class WettedRegionUnbounded(GeometryError):
    pass


class StepTooLarge(GeometryError):
    pass


class CapillaryViolation(GeometryError):
    pass


class NotMeanConvex(GeometryError):
    def __init__(self, message, nodes=None):
        super().__init__(message)
        self.nodes = nodes


class CapillarySignViolation(GeometryError):
    pass


class MinimizerOnBoundary(GeometryError):
    pass


class FitNotConverged(GeometryError):
    pass


class NotConstantCurvature(GeometryError):
    def __init__(self, message, spread=None):
        super().__init__(message)
        self.spread = spread


# cli
class ConfigError(GeometryError):
    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
