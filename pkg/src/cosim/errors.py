"""Exception types shared across the package."""


class CosimError(Exception):
    """Base class for all errors raised by cosim."""


class SingularMatrix(CosimError):
    def __init__(self, message, pivot_index=None):
        super().__init__(message)
        self.pivot_index = pivot_index


class NoConvergence(RuntimeWarning):
    """Power iteration hit its iteration cap; the returned value is the best estimate."""


class SingularAlgebraicPart(CosimError):
    """dg/dz is singular: the system is not index-1 in this formulation."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class MixedRow(CosimError):
    """A mass-matrix row is neither negligible nor part of an invertible block."""


class SingularMass(CosimError):
    pass


class NewtonDiverged(CosimError):
    def __init__(self, message, x=None, residual_norm=float("nan"), t=None):
        super().__init__(message)
        self.x = x
        self.residual_norm = residual_norm
        self.t = t


class GridMismatch(CosimError):
    """The step size does not tile the requested window."""


class WiringError(CosimError):
    pass


class CycleDetected(CosimError):
    pass


class IterationDiverged(CosimError):
    def __init__(self, message, contraction_factor=float("nan"), window=None, reports=()):
        super().__init__(message)
        self.contraction_factor = contraction_factor
        self.window = window
        self.reports = list(reports)


class PicardDiverged(CosimError):
    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class InvalidGrid(CosimError):
    pass


class NonzeroK22(CosimError):
    """An exterior node touches conductive material."""


class DimensionMismatch(CosimError):
    pass


class ConfigError(CosimError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
