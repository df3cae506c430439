"""Anisotropic quantum Rabi model: spectra, wavefunction nodes, spin windings and spin knots."""

__version__ = "0.1.0"

from .errors import (
    ConsistencyError,
    ConvergenceError,
    DegenerateTextureError,
    GridTooNarrowError,
    RabiKnotsError,
    ValidationError,
)
from .model import ModelParams, Spectrum, critical_coupling, solve_spectrum
from .realspace import Grid, default_grid, spin_texture, to_position
from .topology import Tolerances, TopoSummary, analyze_state

__all__ = [
    "__version__",
    "ConsistencyError",
    "ConvergenceError",
    "DegenerateTextureError",
    "GridTooNarrowError",
    "RabiKnotsError",
    "ValidationError",
    "ModelParams",
    "Spectrum",
    "critical_coupling",
    "solve_spectrum",
    "Grid",
    "default_grid",
    "spin_texture",
    "to_position",
    "Tolerances",
    "TopoSummary",
    "analyze_state",
]
