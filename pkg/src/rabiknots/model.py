"""Anisotropic quantum Rabi model in a parity-blocked Fock basis.

The Hamiltonian is

    H = w a^+a + (W/2) sx + g [(st- a^+ + st+ a) + lam (st+ a^+ + st- a)]

with st(+/-) = (sz -/+ i sy)/2.  In the sx eigenbasis {|U>, |D>} the
spin operators become st+ = |U><D| and st- = |D><U|, so the parity
P = sx (-1)^{a^+a} splits the problem into two real symmetric
tridiagonal chains: positive parity uses |U, even n> and |D, odd n>,
negative parity uses |U, odd n> and |D, even n>.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, ValidationError

__all__ = [
    "ModelParams",
    "EigenLevel",
    "Spectrum",
    "critical_coupling",
    "block_spins",
    "block_diagonals",
    "build_block",
    "level_energies",
    "diagonalize",
    "solve_spectrum",
    "jcm_energy",
    "dual_params",
    "full_hamiltonian",
]

MIN_N_CUT = 8


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters plus truncation controls.

    ``g`` is in units of ``Omega``; use :meth:`from_gs` to give it in units
    of g_s = sqrt(omega * Omega) / 2.  ``dual`` marks parameters produced by
    :func:`dual_params` (spin axes relabelled, x read as p).
    """

    omega: float = 0.5
    g: float = 0.0
    lam: float = 0.0
    Omega: float = 1.0
    n_cut: int = 120
    n_levels: int = 16
    dual: bool = False

    def __post_init__(self):
        if not (self.omega > 0 and math.isfinite(self.omega)):
            raise ValidationError(f"omega must be > 0, got {self.omega}")
        if not (self.Omega > 0 and math.isfinite(self.Omega)):
            raise ValidationError(f"Omega must be > 0, got {self.Omega}")
        if not (self.g >= 0 and math.isfinite(self.g)):
            raise ValidationError(f"g must be >= 0, got {self.g}")
        if not math.isfinite(self.lam):
            raise ValidationError(f"lambda must be finite, got {self.lam}")
        if int(self.n_cut) != self.n_cut or self.n_cut < MIN_N_CUT:
            raise ValidationError(
                f"n_cut must be an integer >= {MIN_N_CUT} (truncation too small "
                f"to be meaningful), got {self.n_cut}"
            )
        if int(self.n_levels) != self.n_levels or self.n_levels < 1:
            raise ValidationError(f"n_levels must be an integer >= 1, got {self.n_levels}")
        if self.n_levels > self.n_cut / 2:
            raise ValidationError(
                f"n_levels must be <= n_cut/2 to keep truncation-polluted levels out "
                f"(n_levels={self.n_levels}, n_cut={self.n_cut})"
            )

    @classmethod
    def from_gs(cls, g_over_gs: float, **kwargs) -> "ModelParams":
        omega = kwargs.get("omega", cls.omega)
        Omega = kwargs.get("Omega", cls.Omega)
        gs = math.sqrt(omega * Omega) / 2.0
        return cls(g=g_over_gs * gs, **kwargs)

    @property
    def g_s(self) -> float:
        return critical_coupling(self)

    @property
    def g_over_gs(self) -> float:
        return self.g / critical_coupling(self)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def critical_coupling(params: ModelParams) -> float:
    """Coupling unit g_s = sqrt(omega * Omega) / 2 used on the phase-diagram axes."""
    return math.sqrt(params.omega * params.Omega) / 2.0


@dataclass(frozen=True)
class EigenLevel:
    j_e: int
    energy: float
    parity: int
    coeffs: np.ndarray = field(repr=False)
    block_dim: int = 0

    def __post_init__(self):
        if self.parity not in (1, -1):
            raise ValidationError(f"parity must be +1 or -1, got {self.parity}")
        if not math.isfinite(self.energy):
            raise ConvergenceError("non-finite eigenvalue", {"energy": self.energy})

    @property
    def n_cut(self) -> int:
        return len(self.coeffs) - 1


@dataclass(frozen=True)
class Spectrum:
    params: ModelParams
    levels: tuple

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, j_e: int) -> EigenLevel:
        if not 1 <= j_e <= len(self.levels):
            raise IndexError(f"j_e={j_e} outside 1..{len(self.levels)}")
        return self.levels[j_e - 1]

    @property
    def energies(self) -> np.ndarray:
        return np.array([lv.energy for lv in self.levels])

    @property
    def parities(self) -> np.ndarray:
        return np.array([lv.parity for lv in self.levels], dtype=int)

    def delta_plus(self, j_e: int):
        """Upper gap E(j+1) - E(j); None for the highest resolved level."""
        if j_e >= len(self.levels):
            return None
        return self.levels[j_e].energy - self.levels[j_e - 1].energy

    def delta_minus(self, j_e: int):
        """Lower gap E(j) - E(j-1); None for the ground state."""
        if j_e <= 1:
            return None
        return self.levels[j_e - 1].energy - self.levels[j_e - 2].energy


def block_spins(n_cut: int, parity: int) -> np.ndarray:
    """sx label (+1 = |U>, -1 = |D>) carried by Fock state n in a parity block."""
    if parity not in (1, -1):
        raise ValidationError(f"parity must be +1 or -1, got {parity}")
    n = np.arange(n_cut + 1)
    return np.where(n % 2 == 0, parity, -parity)


def block_diagonals(params: ModelParams, parity: int):
    """(diagonal, off-diagonal) of the tridiagonal parity block, basis ordered by n."""
    if params.n_cut < MIN_N_CUT:
        raise ValidationError(f"n_cut must be >= {MIN_N_CUT}, got {params.n_cut}")
    if params.lam < 0:
        raise ValidationError("lambda < 0 is solved through dual_params(), not directly")
    spins = block_spins(params.n_cut, parity)
    n = np.arange(params.n_cut + 1)
    diag = params.omega * n + 0.5 * params.Omega * spins
    # <D,n+1|H|U,n> = g sqrt(n+1) (rotating), <U,n+1|H|D,n> = g lam sqrt(n+1)
    off = params.g * np.sqrt(n[1:]) * np.where(spins[:-1] > 0, 1.0, params.lam)
    return diag, off


def build_block(params: ModelParams, parity: int) -> np.ndarray:
    """Real symmetric matrix of H in one parity block, basis ordered by n."""
    diag, off = block_diagonals(params, parity)
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def level_energies(params: ModelParams, k: int = None, labels: bool = False):
    """Merged, ascending energies only, from the tridiagonal blocks.

    Much cheaper than :func:`solve_spectrum` for gap searches.  Each block
    yields ``k`` (default ``n_levels + 1``) values and the same completeness
    cutoff is applied.  With ``labels`` the parity and the in-block index of
    every level are returned too.
    """
    k = min(k or params.n_levels + 1, params.n_cut + 1)
    found, tops = [], []
    for parity in (1, -1):
        d, e = block_diagonals(params, parity)
        w = scipy.linalg.eigvalsh_tridiagonal(d, e, select="i", select_range=(0, k - 1))
        tops.append(w[-1])
        found += [(float(x), parity, i) for i, x in enumerate(w)]
    found.sort(key=lambda item: item[0])
    found = [item for item in found if item[0] <= min(tops)]
    energies = np.array([item[0] for item in found])
    if not labels:
        return energies
    return energies, [(item[1], item[2]) for item in found]


def diagonalize(matrix: np.ndarray, k: int):
    """Lowest ``k`` eigenpairs of a real symmetric matrix.

    Returns ``(energies, vectors)`` with ``vectors[:, i]`` unit-norm and the
    residual ||Mv - Ev|| checked against 1e-9 * ||M||.
    """
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {M.shape}")
    dim = M.shape[0]
    if not 1 <= k <= dim:
        raise ValidationError(f"k must satisfy 1 <= k <= {dim}, got {k}")
    if not np.array_equal(M, M.T):
        raise ValidationError("matrix is not exactly symmetric")
    try:
        w, v = scipy.linalg.eigh(M, subset_by_index=[0, k - 1], driver="evr")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceError(f"eigensolver failed: {exc}", {"dim": dim, "k": k}) from exc
    # the 1-norm bounds the spectral norm of a symmetric matrix from above
    norm = max(float(np.abs(M).sum(axis=0).max()), np.finfo(float).tiny)
    resid = np.linalg.norm(M @ v - v * w, axis=0)
    worst = float(resid.max())
    if not np.all(np.isfinite(w)) or worst > 1e-9 * norm:
        raise ConvergenceError(
            "eigenpair residual above 1e-9 * ||M||",
            {"max_residual": worst, "matrix_norm": norm, "dim": dim, "k": k},
        )
    return w, v


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    # largest |c| positive; argmax returns the lowest index among ties
    i = int(np.argmax(np.abs(vec)))
    return -vec if vec[i] < 0 else vec


def solve_spectrum(params: ModelParams) -> Spectrum:
    """Diagonalize both parity blocks and merge them into one ordered spectrum.

    Each block is solved for ``n_levels + 1`` states; only merged levels that
    are guaranteed complete (below the highest computed level of either block)
    are kept, so the result holds at least ``n_levels + 1`` levels.
    """
    k = min(params.n_levels + 1, params.n_cut + 1)
    found = []
    tops = []
    for parity in (1, -1):
        w, v = diagonalize(build_block(params, parity), k)
        tops.append(w[-1])
        for e, vec in zip(w, v.T):
            found.append((float(e), parity, _fix_sign(vec)))
    cutoff = min(tops)
    # stable sort: exact ties keep the + block first
    found.sort(key=lambda item: item[0])
    levels = []
    for e, parity, vec in found:
        if e > cutoff:
            break
        levels.append(
            EigenLevel(
                j_e=len(levels) + 1,
                energy=e,
                parity=parity,
                coeffs=vec,
                block_dim=params.n_cut + 1,
            )
        )
    return Spectrum(params=params, levels=tuple(levels))


def jcm_energy(params: ModelParams, n: int, branch: int = 1) -> float:
    """Closed-form Jaynes-Cummings (lam = 0) level with excitation number ``n``."""
    if n < 0:
        raise ValidationError(f"excitation number must be >= 0, got {n}")
    if n == 0:
        return -params.Omega / 2.0
    sign = 1.0 if branch > 0 else -1.0
    det = params.Omega - params.omega
    return (n - 0.5) * params.omega + sign * math.sqrt(det * det / 4.0 + params.g**2 * n)


def dual_params(params: ModelParams) -> ModelParams:
    """x-p duality: lam -> -lam with relabelled spin-texture axes.

    The numerical pipeline is unchanged; ``dual`` records that the texture
    plane is (s_y, s_x) and the coordinate is momentum.  At lam = 0 the
    mapping is the identity.
    """
    if params.lam == 0:
        return params
    return replace(params, lam=-params.lam, dual=not params.dual)


def full_hamiltonian(params: ModelParams) -> np.ndarray:
    """Unblocked 2(n_cut+1) matrix in the sz (x) Fock basis, spin-major order.

    Independent of :func:`build_block`; used as a brute-force cross-check.
    """
    N = params.n_cut
    a = np.diag(np.sqrt(np.arange(1, N + 1)), 1)
    ad = a.T
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    st_plus = 0.5 * np.array([[1.0, -1.0], [1.0, -1.0]])
    st_minus = 0.5 * np.array([[1.0, 1.0], [-1.0, -1.0]])
    one = np.eye(N + 1)
    H = params.omega * np.kron(np.eye(2), ad @ a) + 0.5 * params.Omega * np.kron(sx, one)
    H = H + params.g * (
        np.kron(st_minus, ad)
        + np.kron(st_plus, a)
        + params.lam * (np.kron(st_plus, ad) + np.kron(st_minus, a))
    )
    return H
