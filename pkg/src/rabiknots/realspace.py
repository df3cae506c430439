"""Position-space wavefunctions and spin textures.

Quadrature convention a^+ = (x - ip)/sqrt(2), so the Fock state |n> is the
normalized Hermite function phi_n(x).  All arrays are real.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConsistencyError, GridTooNarrowError, ValidationError
from .model import EigenLevel, ModelParams, block_spins

__all__ = [
    "Grid",
    "RealSpaceState",
    "SpinTexture",
    "MAX_HERMITE_ORDER",
    "default_grid",
    "hermite_basis",
    "hermite_series",
    "spin_components",
    "to_position",
    "spin_texture",
]

MAX_HERMITE_ORDER = 400
DEFAULT_POINTS = 4001
_RESCALE = 1e150


@dataclass(frozen=True)
class Grid:
    """Symmetric grid on [-x_max, x_max] with an odd point count (x = 0 included)."""

    x_max: float
    n_points: int = DEFAULT_POINTS

    def __post_init__(self):
        if not self.x_max > 0:
            raise ValidationError(f"x_max must be > 0, got {self.x_max}")
        if self.n_points < 3 or self.n_points % 2 == 0:
            raise ValidationError(f"n_points must be odd and >= 3, got {self.n_points}")

    @property
    def x_min(self) -> float:
        return -self.x_max

    @property
    def h(self) -> float:
        return 2.0 * self.x_max / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        # integer offsets keep x[::-1] == -x exactly
        half = (self.n_points - 1) // 2
        return self.h * np.arange(-half, half + 1, dtype=float)


def default_grid(params: ModelParams, n_points: int = DEFAULT_POINTS) -> Grid:
    """Grid wide enough for the spin-dependent displacement plus the basis turning point."""
    shift = math.sqrt(2) * params.g * (1 + abs(params.lam)) / (2 * params.omega) * math.sqrt(2)
    x_max = shift + math.sqrt(2 * (params.n_cut + 1)) + 5.0
    return Grid(x_max=x_max, n_points=n_points)


def hermite_basis(x, n_max: int) -> np.ndarray:
    """Matrix ``phi[n, i] = phi_n(x_i)`` for n = 0..n_max.

    Uses the normalized recurrence
    phi_{n+1} = sqrt(2/(n+1)) x phi_n - sqrt(n/(n+1)) phi_{n-1}
    on values stripped of the Gaussian factor, with a running per-point log
    scale, so neither overflow nor premature underflow occurs for |x| <= 40.
    """
    if isinstance(x, Grid):
        x = x.x
    if int(n_max) != n_max or n_max < 0:
        raise ValidationError(f"n_max must be a non-negative integer, got {n_max}")
    if n_max > MAX_HERMITE_ORDER:
        raise ValidationError(
            f"n_max={n_max} exceeds the recurrence stability budget {MAX_HERMITE_ORDER}"
        )
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((n_max + 1,) + x.shape)
    log_scale = -0.5 * x * x
    factor = np.exp(log_scale)
    prev = np.zeros_like(x)
    cur = np.full_like(x, math.pi ** -0.25)
    out[0] = cur * factor
    for n in range(n_max):
        nxt = math.sqrt(2.0 / (n + 1)) * x * cur - math.sqrt(n / (n + 1)) * prev
        prev, cur = cur, nxt
        # growth per step is at most ~2|x|, so checking every 4th step is safe
        if n % 4 == 3:
            big = np.abs(cur) > _RESCALE
            if big.any():
                s = np.where(big, np.abs(cur), 1.0)
                cur = cur / s
                prev = prev / s
                log_scale = log_scale + np.log(s)
                factor = np.exp(log_scale)
        out[n + 1] = cur * factor
    return out


def hermite_series(coeffs, x) -> np.ndarray:
    """Evaluate sum_n c_n phi_n(x) at arbitrary points."""
    coeffs = np.asarray(coeffs, dtype=float)
    return coeffs @ hermite_basis(x, len(coeffs) - 1)


def spin_components(level: EigenLevel):
    """Fock amplitudes (c_up, c_down) in the sz basis from block coefficients."""
    spins = block_spins(level.n_cut, level.parity)
    c = np.asarray(level.coeffs, dtype=float) / math.sqrt(2.0)
    return c.copy(), c * spins


@dataclass(frozen=True)
class RealSpaceState:
    grid: Grid
    psi_plus: np.ndarray = field(repr=False)
    psi_minus: np.ndarray = field(repr=False)
    psi_up_tilde: np.ndarray = field(repr=False)
    psi_down_tilde: np.ndarray = field(repr=False)
    parity: int
    norm_residual: float
    c_plus: np.ndarray = field(repr=False)
    c_minus: np.ndarray = field(repr=False)
    j_e: int = 0

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def evaluate(self, x):
        """(psi_plus, psi_minus) at arbitrary points from the Hermite series."""
        basis = hermite_basis(x, len(self.c_plus) - 1)
        return self.c_plus @ basis, self.c_minus @ basis

    def component(self, name: str, x):
        """One of psi_plus, psi_minus, psi_up_tilde, psi_down_tilde at arbitrary x."""
        p, m = self.evaluate(x)
        if name == "psi_plus":
            return p
        if name == "psi_minus":
            return m
        if name == "psi_up_tilde":
            return (p + m) / math.sqrt(2.0)
        if name == "psi_down_tilde":
            return (p - m) / math.sqrt(2.0)
        raise ValueError(f"unknown component {name!r}")


def to_position(level: EigenLevel, grid: Grid) -> RealSpaceState:
    """Reconstruct psi_(+/-)(x) and the sx-basis components on ``grid``."""
    c_plus, c_minus = spin_components(level)
    basis = hermite_basis(grid.x, level.n_cut)
    psi_p = c_plus @ basis
    psi_m = c_minus @ basis
    peak = max(np.abs(psi_p).max(), np.abs(psi_m).max())
    edge = max(abs(psi_p[0]), abs(psi_p[-1]), abs(psi_m[0]), abs(psi_m[-1]))
    if edge > 1e-8 * peak:
        raise GridTooNarrowError(
            f"edge amplitude {edge:.3e} exceeds 1e-8 of peak {peak:.3e}; widen the grid "
            f"beyond x_max={grid.x_max:.3f}"
        )
    mirror = psi_p[::-1]
    parity_dev = float(np.abs(psi_m - level.parity * mirror).max())
    if parity_dev > 1e-9:
        raise ConsistencyError(f"psi_- != P psi_+(-x): max deviation {parity_dev:.3e}")
    norm = float(trapezoid(psi_p**2 + psi_m**2, dx=grid.h))
    if abs(norm - 1.0) > 1e-6:
        raise ConsistencyError(f"grid norm {norm:.9f} deviates from 1 by more than 1e-6")
    root2 = math.sqrt(2.0)
    return RealSpaceState(
        grid=grid,
        psi_plus=psi_p,
        psi_minus=psi_m,
        psi_up_tilde=(psi_p + psi_m) / root2,
        psi_down_tilde=(psi_p - psi_m) / root2,
        parity=level.parity,
        norm_residual=abs(norm - 1.0),
        c_plus=c_plus,
        c_minus=c_minus,
        j_e=level.j_e,
    )


@dataclass(frozen=True)
class SpinTexture:
    """Per-x spin expectations; ``state`` allows off-grid evaluation."""

    grid: Grid
    s_z: np.ndarray = field(repr=False)
    s_x: np.ndarray = field(repr=False)
    s_y: np.ndarray = field(repr=False)
    state: RealSpaceState = field(repr=False, default=None)

    def evaluate(self, x):
        """(s_z, s_x) at arbitrary points."""
        p, m = self.state.evaluate(x)
        return p * p - m * m, 2.0 * p * m


def spin_texture(state: RealSpaceState) -> SpinTexture:
    p = state.psi_plus
    m = state.psi_minus
    s_z = p * p - m * m
    s_x = 2.0 * p * m
    # <sy> = i (psi_-^* psi_+ - psi_+^* psi_-); vanishes identically for real psi
    pc = p.astype(complex)
    mc = m.astype(complex)
    s_y = np.real(1j * (np.conj(mc) * pc - np.conj(pc) * mc))
    if np.abs(s_y).max() > 1e-10:
        raise ConsistencyError("<sigma_y(x)> does not vanish")
    if np.abs(s_x - s_x[::-1]).max() > 1e-9:
        raise ConsistencyError("<sigma_x(x)> is not even in x")
    if np.abs(s_z + s_z[::-1]).max() > 1e-9:
        raise ConsistencyError("<sigma_z(x)> is not odd in x")
    return SpinTexture(grid=state.grid, s_z=s_z, s_x=s_x, s_y=s_y, state=state)
