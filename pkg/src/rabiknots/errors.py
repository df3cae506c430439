"""Exception hierarchy shared by all modules."""


class RabiKnotsError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(RabiKnotsError, ValueError):
    """Invalid parameters or configuration."""


class ConvergenceError(RabiKnotsError):
    """The eigensolver failed or its residual check did not pass."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class GridTooNarrowError(RabiKnotsError):
    """Wavefunction amplitude at the grid edge is not negligible."""


class ConsistencyError(RabiKnotsError):
    """An internal symmetry or counting identity was violated."""


class DegenerateTextureError(RabiKnotsError):
    """The spin texture is degenerate (e.g. s_z vanishes identically at g = 0)."""
