"""Nodes, spin windings, spin knots and topological codes of one eigenstate.

Conventions
-----------
* The spin trajectory is (s_z(x), s_x(x)) with s_z on the horizontal axis;
  counterclockwise winding is positive.
* A sigma_x zero is a node of psi_+ or psi_-; a sigma_z zero is a node of
  one of the sigma_x-basis components psi~_(+/-) (equal |psi_+| and |psi_-|).
* The two ends x -> +/-inf are treated as connected.  The connection crosses
  the s_x axis once and contributes a virtual sigma_z zero whose sign is the
  sign of s_x at the edge of the resolved support.
* Interior stretches where both components fall below the tail threshold
  (well separated wave packets) are unresolved gaps.  Zeros inside a gap
  are dropped and the trajectory is bridged by the straight chord between
  the resolved gap ends; the chord's axis crossings enter as virtual zeros.
* Code digits: 1/3 for sigma_x zeros with s_z > 0 / < 0, 2/4 for sigma_z
  zeros with s_x > 0 / < 0, 5 for a diagonal knot, and the boundary digit
  last with a tilde.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConsistencyError, DegenerateTextureError, ValidationError
from .model import EigenLevel, ModelParams, solve_spectrum
from .realspace import (
    DEFAULT_POINTS,
    Grid,
    RealSpaceState,
    SpinTexture,
    default_grid,
    spin_texture,
    to_position,
)

__all__ = [
    "ORDER_TOL",
    "Tolerances",
    "AxisZero",
    "Support",
    "Section",
    "NodeSections",
    "WindingIntegral",
    "KnotCrossing",
    "DiagonalKnots",
    "TopoSummary",
    "StateAnalysis",
    "resolved_support",
    "find_sigma_x_zeros",
    "find_sigma_z_zeros",
    "boundary_zero",
    "gap_zeros",
    "winding_integral",
    "sort_nodes",
    "winding_algebraic",
    "knot_counters",
    "diagonal_knots",
    "encode_topology",
    "code_winding",
    "analyze_level",
    "analyze_state",
]

SIGMA_X_ZERO = "sigma_x_zero"
SIGMA_Z_ZERO = "sigma_z_zero"
_TWO_PI = 2.0 * math.pi
_MIN_GAP = 3
# neighbouring levels closer than this (in units of Omega) are degenerate to
# solver precision and their energy order, hence the j_e label, is arbitrary
ORDER_TOL = 1e-10


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds of the zero/knot analysis.

    eps_tail
        The resolved support is the window |x| <= x_b, where x_b is the
        outermost point at which both |psi_+| and |psi_-| still exceed
        ``eps_tail`` times their global maximum.  Zeros outside it are tail
        noise and are dropped.
    tol_axis
        Diagonal-knot crossings closer than ``tol_axis * max radius`` to an
        axis are discarded.
    angle_tol_deg
        Crossings at a smaller angle are counted but flagged uncertain.
    """

    eps_tail: float = 1e-10
    tol_axis: float = 1e-3
    angle_tol_deg: float = 1.0
    root_tol: float = 1e-10
    pair_tol: float = 1e-8
    max_turn: float = math.pi / 4
    max_refine_depth: int = 10

    def __post_init__(self):
        for name in ("eps_tail", "tol_axis", "angle_tol_deg", "root_tol", "pair_tol", "max_turn"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"tolerance {name} must be positive")


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class AxisZero:
    x: float
    axis: str
    companion_sign: int
    source: str
    boundary: bool = False

    @property
    def digit(self) -> str:
        if self.axis == SIGMA_X_ZERO:
            return "1" if self.companion_sign > 0 else "3"
        return "2" if self.companion_sign > 0 else "4"


@dataclass(frozen=True)
class Support:
    """Symmetric index window [i_lo, i_hi] where both spin components are resolved."""

    i_lo: int
    i_hi: int
    x_b: float
    boundary_sign: int
    amp_max: float
    gaps: tuple = ()  # (L, R) grid indices of the resolved points around each gap

    def in_gap(self, x, grid_x) -> bool:
        return any(grid_x[L] < x < grid_x[R] for L, R in self.gaps)


@dataclass(frozen=True)
class Section:
    zeros: tuple  # sigma_z zeros in trajectory order (boundary included for the wrap)
    start: AxisZero = None
    end: AxisZero = None
    wrap: bool = False

    @property
    def m(self) -> int:
        return len(self.zeros)

    @property
    def s_last(self) -> int:
        return self.zeros[-1].companion_sign if self.zeros else 0


@dataclass(frozen=True)
class NodeSections:
    selected: tuple
    S: tuple
    sections: tuple
    wrap_section_index: int

    @property
    def m(self) -> tuple:
        return tuple(sec.m for sec in self.sections)

    @property
    def s_last(self) -> tuple:
        return tuple(sec.s_last for sec in self.sections)


@dataclass(frozen=True)
class WindingIntegral:
    n_zx: float
    n_w: int
    closure: float
    degenerate: bool = False
    unresolved_steps: int = 0


@dataclass(frozen=True)
class KnotCrossing:
    x1: float
    x2: float
    s_z: float
    s_x: float
    angle_deg: float


@dataclass(frozen=True)
class DiagonalKnots:
    crossings: tuple
    uncertain: bool = False

    @property
    def count(self) -> int:
        return len(self.crossings)


@dataclass(frozen=True)
class TopoSummary:
    parity: int
    n_Z: int
    n_zx: float
    n_w: int
    n_w_alg: int
    n_aw: int
    n_ex: int
    n_dk: int
    code: str
    degenerate: bool = False
    flags: tuple = ()

    @property
    def tuple4(self) -> tuple:
        """(n_Z, n_w, n_ex, n_DK) in the order used for figure captions."""
        return (self.n_Z, self.n_w, self.n_ex, self.n_dk)

    def as_dict(self) -> dict:
        return {
            "parity": self.parity,
            "n_Z": self.n_Z,
            "n_zx": self.n_zx,
            "n_w": self.n_w,
            "n_w_alg": self.n_w_alg,
            "n_aw": self.n_aw,
            "n_ex": self.n_ex,
            "n_dk": self.n_dk,
            "code": self.code,
            "degenerate": self.degenerate,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class StateAnalysis:
    level: EigenLevel
    state: RealSpaceState = field(repr=False)
    texture: SpinTexture = field(repr=False)
    support: Support
    x_zeros: tuple
    z_zeros: tuple
    sections: NodeSections
    winding: WindingIntegral
    knots: DiagonalKnots
    summary: TopoSummary


# ---------------------------------------------------------------------------
# zero location


def resolved_support(state: RealSpaceState, tol: Tolerances = DEFAULT_TOL) -> Support:
    p, m = state.psi_plus, state.psi_minus
    amp = float(max(np.abs(p).max(), np.abs(m).max()))
    thr = tol.eps_tail * amp
    n = len(p)
    hi_p = np.nonzero(np.abs(p) > thr)[0]
    hi_m = np.nonzero(np.abs(m) > thr)[0]
    if len(hi_p) == 0 or len(hi_m) == 0:
        raise DegenerateTextureError("one spin component is unresolved everywhere")
    i_hi = int(min(hi_p[-1], hi_m[-1]))
    i_lo = n - 1 - i_hi
    if i_hi <= i_lo:
        raise DegenerateTextureError("resolved support collapsed to a point")
    s_x = 2.0 * p[i_lo : i_hi + 1] * m[i_lo : i_hi + 1]
    nz = np.nonzero(s_x)[0]
    sign = int(np.sign(s_x[nz[-1]])) if len(nz) else 0
    # both ends of the support are resolved, so every dark run is interior
    dark = np.maximum(np.abs(p), np.abs(m)) <= thr
    dark[: i_lo + 1] = False
    dark[i_hi:] = False
    edges = np.diff(dark.astype(np.int8))
    starts = np.nonzero(edges == 1)[0]  # last resolved index before a run
    stops = np.nonzero(edges == -1)[0] + 1  # first resolved index after it
    # a common node darkens at most one sample; a decayed overlap many
    gaps = tuple((a, b) for a, b in zip(starts.tolist(), stops.tolist()) if b - a > _MIN_GAP)
    return Support(
        i_lo=i_lo, i_hi=i_hi, x_b=float(state.x[i_hi]), boundary_sign=sign, amp_max=amp, gaps=gaps
    )


def _sign_brackets(f: np.ndarray):
    """Index pairs (a, b) of consecutive nonzero samples with opposite signs."""
    nz = np.nonzero(f)[0]
    if len(nz) < 2:
        return []
    s = np.sign(f[nz])
    k = np.nonzero(s[:-1] * s[1:] < 0)[0]
    return list(zip(nz[k].tolist(), nz[k + 1].tolist()))


def _kept_brackets(f: np.ndarray, support: Support):
    # Only the support cut and the gaps (where both components are dark) are
    # applied.  Dropping an interior zero of one component while keeping the
    # other components' zeros in the same faint region would break the
    # integral/algebraic winding agreement.
    return [
        (a, b)
        for a, b in _sign_brackets(f)
        if a >= support.i_lo and b <= support.i_hi
        and not any(a < R and b > L for L, R in support.gaps)
    ]


def gap_zeros(texture: SpinTexture, support: Support, axis: str):
    """Virtual zeros where the bridging chords of the gaps cross an axis."""
    x = texture.grid.x
    out = []
    for L, R in support.gaps:
        pl = np.array([texture.s_z[L], texture.s_x[L]])
        pr = np.array([texture.s_z[R], texture.s_x[R]])
        k = 1 if axis == SIGMA_X_ZERO else 0  # coordinate that vanishes
        if pl[k] * pr[k] >= 0:
            continue
        t = pl[k] / (pl[k] - pr[k])
        other = (1 - t) * pl[1 - k] + t * pr[1 - k]
        if other == 0.0:
            raise ConsistencyError("gap chord passes through the origin")
        x0 = x[L] + t * (x[R] - x[L])
        out.append(AxisZero(float(x0), axis, int(np.sign(other)), "gap"))
    return out


_COMBO = {
    "psi_plus": (1.0, 0.0),
    "psi_minus": (0.0, 1.0),
    "psi_up_tilde": (math.sqrt(0.5), math.sqrt(0.5)),
    "psi_down_tilde": (math.sqrt(0.5), -math.sqrt(0.5)),
}
# companion sign fixed by which component vanishes: psi_+ = 0 gives
# s_z = -psi_-^2 < 0, psi_- = 0 gives s_z > 0, psi~_+ = 0 means psi_+ = -psi_-
# so s_x < 0, psi~_- = 0 gives s_x > 0
_COMPANION = {"psi_plus": -1, "psi_minus": 1, "psi_up_tilde": -1, "psi_down_tilde": 1}


_SECTIONS = 64


def _bisect(state: RealSpaceState, names, brackets, tol: float) -> np.ndarray:
    """Vectorized multisection on the Hermite series, all brackets at once.

    Each pass evaluates 63 interior points per bracket and keeps the first
    sub-interval with a sign change, i.e. six bisection steps per series
    evaluation.  ``names[k]`` selects the component whose sign change
    ``brackets[k]`` (grid index pair) encloses.
    """
    if not brackets:
        return np.empty(0)
    x = state.x
    cp = np.array([_COMBO[n][0] for n in names])
    cm = np.array([_COMBO[n][1] for n in names])
    a = np.array([x[i] for i, _ in brackets])
    b = np.array([x[j] for _, j in brackets])
    fa = np.array([cp[k] * state.psi_plus[i] + cm[k] * state.psi_minus[i] for k, (i, _) in enumerate(brackets)])
    done = np.zeros(len(a), dtype=bool)
    root = np.full(len(a), np.nan)
    # an exact grid zero between the bracket ends (x = 0 for odd functions)
    for k, (i, j) in enumerate(brackets):
        if j - i == 2:
            root[k] = x[i + 1]
            done[k] = True
    frac = np.arange(1, _SECTIONS) / _SECTIONS
    while True:
        act = np.nonzero(~done & (b - a > tol))[0]
        if not len(act):
            break
        pts = a[act, None] + (b - a)[act, None] * frac[None, :]
        p, m = state.evaluate(pts.ravel())
        f = (cp[act, None] * p.reshape(pts.shape) + cm[act, None] * m.reshape(pts.shape))
        for r, k in enumerate(act):
            fr = f[r]
            hit = np.nonzero(fr == 0.0)[0]
            flips = np.nonzero(np.sign(fr) != np.sign(fa[k]))[0]
            first = flips[0] if len(flips) else _SECTIONS - 1
            if len(hit) and hit[0] <= first:
                root[k] = pts[r, hit[0]]
                done[k] = True
                continue
            lo = a[k] if first == 0 else pts[r, first - 1]
            hi = b[k] if first == _SECTIONS - 1 else pts[r, first]
            if first > 0:
                fa[k] = fr[first - 1]
            a[k], b[k] = lo, hi
    rest = ~done
    root[rest] = 0.5 * (a[rest] + b[rest])
    return root


# x -> -x maps psi_+ onto psi_- and each of psi~_(+/-) onto itself
_MIRROR = {
    "psi_plus": "psi_minus",
    "psi_minus": "psi_plus",
    "psi_up_tilde": "psi_up_tilde",
    "psi_down_tilde": "psi_down_tilde",
}


def _locate(state: RealSpaceState, support: Support, components, tol: Tolerances):
    """Refined roots per component name, each ascending.

    Only one member of every mirror pair of brackets is refined and the
    partner root is its reflection.  Near the noise floor the root precision
    is limited to roughly eps * scale / |slope|, so refining both members
    separately can split a symmetric pair.
    """
    n = len(state.x)
    br = {name: _kept_brackets(getattr(state, name), support) for name in components}
    for name in components:
        partner = _MIRROR[name]
        if partner in br:
            mirrored = sorted((n - 1 - j, n - 1 - i) for i, j in br[partner])
            if mirrored != br[name]:
                raise ConsistencyError(f"sign changes of {name} and mirrored {partner} differ")
    names, brackets = [], []
    for name in components:
        partner = _MIRROR[name]
        for i, j in br[name]:
            if partner == name and i + j > n - 1:
                continue  # right half, mirrored below
            if partner != name and name > partner:
                continue
            names.append(name)
            brackets.append((i, j))
    roots = _bisect(state, names, brackets, tol.root_tol)
    out = {name: [] for name in components}
    for name, (i, j), r in zip(names, brackets, roots):
        r = float(r)
        partner = _MIRROR[name]
        if partner == name and i + j == n - 1:
            out[name].append(0.0)  # symmetric bracket around x = 0
            continue
        out[name].append(r)
        out[partner].append(-r)
    return {name: np.sort(np.array(v)) for name, v in out.items()}


def _make_zeros(texture, found, axis, check_companion=True):
    zeros = []
    pts = np.concatenate([v for v in found.values()]) if found else np.empty(0)
    if check_companion and len(pts):
        s_z, s_x = texture.evaluate(pts)
        other = s_z if axis == SIGMA_X_ZERO else s_x
        bad = np.nonzero(other == 0.0)[0]
        if len(bad):
            which = "s_z" if axis == SIGMA_X_ZERO else "s_x"
            raise ConsistencyError(f"{which} vanishes at the {axis} x={pts[bad[0]]:.6g}")
    for name, roots in found.items():
        sign = _COMPANION[name] if check_companion else 0
        zeros.extend(AxisZero(float(x0), axis, sign, name) for x0 in roots)
    zeros.sort(key=lambda z: z.x)
    return zeros


def find_sigma_x_zeros(
    state: RealSpaceState,
    texture: SpinTexture,
    tol: Tolerances = DEFAULT_TOL,
    support: Support = None,
    require_companion: bool = True,
):
    """Nodes of psi_+ and psi_- (zeros of s_x), ascending, with s_z signs.

    Zeros come in parity pairs: each node of psi_+ at x has a partner node of
    psi_- at -x.
    """
    if support is None:
        support = resolved_support(state, tol)
    found = _locate(state, support, ("psi_plus", "psi_minus"), tol)
    plus, minus = found["psi_plus"], found["psi_minus"]
    if len(plus) != len(minus) or (len(plus) and np.abs(plus + minus[::-1]).max() > tol.pair_tol):
        raise ConsistencyError(f"unpaired sigma_x zeros: psi_+ nodes {plus}, psi_- nodes {minus}")
    zeros = _make_zeros(texture, found, SIGMA_X_ZERO, require_companion)
    if require_companion and support.gaps:
        zeros = sorted(zeros + gap_zeros(texture, support, SIGMA_X_ZERO), key=lambda z: z.x)
    return zeros


def _check_texture(texture: SpinTexture):
    dens = np.abs(texture.state.psi_plus) ** 2 + np.abs(texture.state.psi_minus) ** 2
    if np.abs(texture.s_z).max() <= 1e-13 * dens.max():
        raise DegenerateTextureError(
            "s_z vanishes identically (uncoupled limit); sigma_z zeros are undefined"
        )


def find_sigma_z_zeros(
    state: RealSpaceState,
    texture: SpinTexture,
    tol: Tolerances = DEFAULT_TOL,
    support: Support = None,
):
    """Zeros of s_z where s_z changes sign, ascending, with s_x signs.

    They are the nodes of psi~_+ and psi~_-, i.e. points of equal |psi_+| and
    |psi_-|.  x = 0 shows up only when s_z actually changes sign there.
    """
    _check_texture(texture)
    if support is None:
        support = resolved_support(state, tol)
    found = _locate(state, support, ("psi_up_tilde", "psi_down_tilde"), tol)
    zeros = _make_zeros(texture, found, SIGMA_Z_ZERO)
    if support.gaps:
        zeros = sorted(zeros + gap_zeros(texture, support, SIGMA_Z_ZERO), key=lambda z: z.x)
    return zeros


def boundary_zero(support: Support) -> AxisZero:
    """Virtual sigma_z zero contributed by the connected +/-inf ends."""
    return AxisZero(math.inf, SIGMA_Z_ZERO, support.boundary_sign, "boundary", boundary=True)


# ---------------------------------------------------------------------------
# winding


def _wrap(d):
    return (np.asarray(d) + math.pi) % _TWO_PI - math.pi


def _refined_turns(texture, segments, tol, depth, counter):
    """Turning along each array of sample points in ``segments``.

    All points of one depth are evaluated in a single series call; steps
    that still turn by more than ``tol.max_turn`` are subdivided.
    """
    z, v = texture.evaluate(np.concatenate(segments))
    out, pending, at = [], [], 0
    for si, xs in enumerate(segments):
        n = len(xs)
        d = _wrap(np.diff(np.arctan2(v[at:at + n], z[at:at + n])))
        at += n
        total = 0.0
        for k, dk in enumerate(d):
            if abs(dk) > tol.max_turn and depth < tol.max_refine_depth:
                pending.append((si, np.linspace(xs[k], xs[k + 1], 17)))
            else:
                if abs(dk) > tol.max_turn:
                    counter[0] += 1
                total += float(dk)
        out.append(total)
    if pending:
        sub = _refined_turns(texture, [xs for _, xs in pending], tol, depth + 1, counter)
        for (si, _), t in zip(pending, sub):
            out[si] += t
    return out


def winding_integral(
    texture: SpinTexture,
    support: Support = None,
    tol: Tolerances = DEFAULT_TOL,
    zeros=(),
) -> WindingIntegral:
    """Total turning of (s_z, s_x) around the origin over the resolved support.

    Grid steps that turn by more than ``tol.max_turn``, or that contain one
    of the given axis ``zeros``, are resampled off-grid (with the zeros as
    extra sample points, so a loop tighter than the grid spacing is not
    lost).  Gaps are bridged by their chord.  The open-curve value ``n_zx``
    is then closed by the straight chord from the last point back to the
    first (the two ends are mirror images about the s_x axis), and ``n_w`` is
    the nearest integer.
    """
    if support is None:
        support = resolved_support(texture.state, tol)
    sl = slice(support.i_lo, support.i_hi + 1)
    z = texture.s_z[sl]
    v = texture.s_x[sl]
    x = texture.grid.x[sl]
    radius = np.hypot(z, v)
    if radius.max() <= 1e-14 * support.amp_max**2:
        return WindingIntegral(0.0, 0, 0.0, degenerate=True)
    theta = np.arctan2(v, z)
    d = _wrap(np.diff(theta))
    in_gap = np.zeros(len(d), dtype=bool)
    for L, R in support.gaps:
        a, b = L - support.i_lo, R - support.i_lo
        in_gap[a:b] = True
        d[a:b] = 0.0
        d[a] = _wrap(theta[b] - theta[a])
    counter = [0]
    if texture.state is not None:
        pts = np.array(sorted(z0.x for z0 in zeros if not z0.boundary and x[0] < z0.x < x[-1]))
        step_of = np.searchsorted(x, pts, side="right") - 1
        todo = set(np.nonzero(np.abs(d) > tol.max_turn)[0].tolist()) | set(step_of.tolist())
        steps = [k for k in sorted(todo) if not in_gap[k]]
        if steps:
            segments = [np.concatenate(([x[k]], pts[step_of == k], [x[k + 1]])) for k in steps]
            d[steps] = _refined_turns(texture, segments, tol, 1, counter)
    else:
        counter[0] = int(np.count_nonzero((np.abs(d) > tol.max_turn) & ~in_gap))
    turn = float(d.sum())
    closure = float(_wrap(theta[0] - theta[-1]))
    n_zx = turn / _TWO_PI
    n_w = int(round((turn + closure) / _TWO_PI))
    return WindingIntegral(n_zx=n_zx, n_w=n_w, closure=closure / _TWO_PI, unresolved_steps=counter[0])


def sort_nodes(x_zeros, z_zeros, boundary: AxisZero) -> NodeSections:
    """Select the s_z-sign-changing sigma_x zeros and split the axis into sections.

    Section i runs from selected zero i to selected zero i+1; the last
    (wrap) section runs from the last selected zero through +inf, the
    boundary closure and -inf back to the first one.  Without any sigma_x
    zero the whole axis forms a single wrap section.
    """
    xs = sorted(x_zeros, key=lambda z: z.x)
    zs = sorted((z for z in z_zeros if not z.boundary), key=lambda z: z.x)
    selected = []
    for z in xs:
        if not selected or z.companion_sign != selected[-1].companion_sign:
            selected.append(z)
    if not selected:
        sec = Section(zeros=tuple(zs) + (boundary,), wrap=True)
        return NodeSections(selected=(), S=(), sections=(sec,), wrap_section_index=0)
    if len(selected) % 2:
        raise ConsistencyError("odd number of sign-changing sigma_x zeros")
    sections = []
    for a, b in zip(selected[:-1], selected[1:]):
        inside = tuple(z for z in zs if a.x < z.x < b.x)
        sections.append(Section(zeros=inside, start=a, end=b))
    first, last = selected[0], selected[-1]
    wrap = (
        tuple(z for z in zs if z.x > last.x)
        + (boundary,)
        + tuple(z for z in zs if z.x < first.x)
    )
    sections.append(Section(zeros=wrap, start=last, end=first, wrap=True))
    return NodeSections(
        selected=tuple(selected),
        S=tuple(z.companion_sign for z in selected),
        sections=tuple(sections),
        wrap_section_index=len(sections) - 1,
    )


def winding_algebraic(sections: NodeSections) -> int:
    """Winding number from node ordering: sum over sections of
    (1 - (-1)^m) / 4 * S_i * s_last."""
    if not sections.selected:
        return 0
    twice = 0
    for S, sec in zip(sections.S, sections.sections):
        if sec.m % 2:
            twice += S * sec.s_last
    if twice % 2:
        raise ConsistencyError("half-integer algebraic winding number")
    return twice // 2


def knot_counters(sections: NodeSections, x_zeros, n_w: int):
    """(n_aw, n_ex): anti-winding node pairs and extra sigma_z zeros."""
    n_Z = len(x_zeros) // 2
    n_aw = n_Z - abs(n_w)
    if n_aw < 0:
        raise ConsistencyError(f"|n_w|={abs(n_w)} exceeds the node number n_Z={n_Z}")
    n_ex = sum(sec.m - 1 for sec in sections.sections)
    return n_aw, n_ex


# ---------------------------------------------------------------------------
# diagonal knots


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _polyline_crossings(P: np.ndarray, block: int = 256):
    """Proper crossings between non-adjacent segments of a polyline.

    Returns (i, j, t, u) with segment i hit at fraction t and segment j > i+1
    at fraction u; half-open fractions count a vertex hit once.
    """
    A = P[:-1]
    B = P[1:]
    n = len(A)
    if n < 3:
        return []
    lo = np.minimum(A, B)
    hi = np.maximum(A, B)
    out = []
    cols = np.arange(n)
    for start in range(0, n, block):
        rows = np.arange(start, min(n, start + block))
        ov = (
            (lo[rows, None, 0] <= hi[None, :, 0])
            & (hi[rows, None, 0] >= lo[None, :, 0])
            & (lo[rows, None, 1] <= hi[None, :, 1])
            & (hi[rows, None, 1] >= lo[None, :, 1])
            & (cols[None, :] > rows[:, None] + 1)
        )
        ii, jj = np.nonzero(ov)
        if not len(ii):
            continue
        ii = rows[ii]
        r = B[ii] - A[ii]
        s = B[jj] - A[jj]
        den = _cross(r, s)
        qp = A[jj] - A[ii]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = _cross(qp, s) / den
            u = _cross(qp, r) / den
        hit = (den != 0) & (t >= 0) & (t < 1) & (u >= 0) & (u < 1)
        out.extend(zip(ii[hit].tolist(), jj[hit].tolist(), t[hit].tolist(), u[hit].tolist()))
    return out


def diagonal_knots(
    texture: SpinTexture,
    x_zeros,
    z_zeros,
    support: Support = None,
    tol: Tolerances = DEFAULT_TOL,
) -> DiagonalKnots:
    """Off-axis self-crossings of the spin trajectory (equal-spin points).

    The trajectory is cut at every axis zero and at the support edges; both
    parameter points x1 < x2 of a crossing must lie on one of these arcs.
    Between consecutive zeros neither s_z nor s_x changes sign, so each arc
    stays inside one open quadrant.
    """
    if support is None:
        support = resolved_support(texture.state, tol)
    x = texture.grid.x
    sl = slice(support.i_lo, support.i_hi + 1)
    radius_max = float(np.hypot(texture.s_z[sl], texture.s_x[sl]).max())
    axis_tol = tol.tol_axis * radius_max
    cuts = [z.x for z in list(x_zeros) + list(z_zeros) if not z.boundary]
    cuts += [x[i] for gap in support.gaps for i in gap]
    edges = [x[support.i_lo]] + sorted(cuts) + [x[support.i_hi]]
    z_at, v_at = texture.evaluate(np.array(edges))
    crossings = []
    uncertain = False
    for e, (xa, xb) in enumerate(zip(edges[:-1], edges[1:])):
        if support.in_gap(0.5 * (xa + xb), x):
            continue  # bridged by a straight chord
        ia = np.searchsorted(x, xa, side="right")
        ib = np.searchsorted(x, xb, side="left")
        xs = np.concatenate(([xa], x[ia:ib], [xb]))
        if len(xs) < 4:
            continue
        z = np.concatenate(([z_at[e]], texture.s_z[ia:ib], [z_at[e + 1]]))
        v = np.concatenate(([v_at[e]], texture.s_x[ia:ib], [v_at[e + 1]]))
        # a curve whose polar angle is strictly monotone meets every ray from
        # the origin once and cannot cross itself
        turn = np.diff(np.unwrap(np.arctan2(v, z)))
        if np.all(turn > 0) or np.all(turn < 0):
            continue
        P = np.column_stack((z, v))
        for i, j, t, u in _polyline_crossings(P):
            pt = P[i] + t * (P[i + 1] - P[i])
            if abs(pt[0]) < axis_tol or abs(pt[1]) < axis_tol:
                continue
            r = P[i + 1] - P[i]
            s = P[j + 1] - P[j]
            sin_a = abs(_cross(r, s)) / (np.linalg.norm(r) * np.linalg.norm(s))
            angle = math.degrees(math.asin(min(1.0, float(sin_a))))
            if angle < tol.angle_tol_deg:
                uncertain = True
            x1 = xs[i] + t * (xs[i + 1] - xs[i])
            x2 = xs[j] + u * (xs[j + 1] - xs[j])
            crossings.append(KnotCrossing(float(x1), float(x2), float(pt[0]), float(pt[1]), angle))
    crossings.sort(key=lambda c: c.x1)
    return DiagonalKnots(crossings=tuple(crossings), uncertain=uncertain)


# ---------------------------------------------------------------------------
# codes


def encode_topology(x_zeros, z_zeros, knots: DiagonalKnots, boundary: AxisZero) -> str:
    """Digit string of the ordered zero/knot sequence, boundary digit last as ``~d``."""
    items = [(z.x, z.digit) for z in list(x_zeros) + list(z_zeros) if not z.boundary]
    items += [(c.x1, "5") for c in knots.crossings]
    items.sort(key=lambda item: item[0])
    return "".join(d for _, d in items) + "~" + boundary.digit


_CCW_NEXT = {"1": "2", "2": "3", "3": "4", "4": "1"}
_QUARTER = {("1", "2"): 1, ("2", "3"): 1, ("3", "4"): 1, ("4", "1"): 1,
            ("2", "1"): -1, ("3", "2"): -1, ("4", "3"): -1, ("1", "4"): -1}


def code_winding(code: str) -> int:
    """Winding number re-read from a code string.

    Consecutive axis crossings 1-2-3-4 (counterclockwise) advance a quarter
    turn, the reversed steps go back one; repeated digits are returns to the
    same half-axis and do not turn.  The boundary digit closes the loop.
    """
    digits = [c for c in code if c in "1234"]
    if not digits:
        return 0
    seq = digits + [digits[0]]
    quarters = 0
    for a, b in zip(seq[:-1], seq[1:]):
        if a == b:
            continue
        step = _QUARTER.get((a, b))
        if step is None:
            raise ConsistencyError(f"code jumps across the origin between {a} and {b}")
        quarters += step
    if quarters % 4:
        raise ConsistencyError("code does not close")
    return quarters // 4


# ---------------------------------------------------------------------------
# pipeline


def analyze_level(
    level: EigenLevel,
    grid: Grid,
    tol: Tolerances = DEFAULT_TOL,
) -> StateAnalysis:
    """Every counter for one eigenlevel on ``grid``.

    The uncoupled limit (s_z identically zero) returns a degenerate summary
    with zero winding, no sigma_z zeros and an empty code instead of raising.
    """
    state = to_position(level, grid)
    texture = spin_texture(state)
    support = resolved_support(state, tol)
    try:
        _check_texture(texture)
    except DegenerateTextureError:
        x_zeros = find_sigma_x_zeros(state, texture, tol, support, require_companion=False)
        n_Z = len(x_zeros) // 2
        summary = TopoSummary(
            parity=level.parity, n_Z=n_Z, n_zx=0.0, n_w=0, n_w_alg=0, n_aw=n_Z,
            n_ex=0, n_dk=0, code="", degenerate=True, flags=("degenerate_texture",),
        )
        return StateAnalysis(
            level=level, state=state, texture=texture, support=support,
            x_zeros=tuple(x_zeros), z_zeros=(), sections=NodeSections((), (), (), -1),
            winding=WindingIntegral(0.0, 0, 0.0, degenerate=True),
            knots=DiagonalKnots(()), summary=summary,
        )
    x_zeros = find_sigma_x_zeros(state, texture, tol, support)
    z_zeros = find_sigma_z_zeros(state, texture, tol, support)
    bnd = boundary_zero(support)
    sections = sort_nodes(x_zeros, z_zeros, bnd)
    winding = winding_integral(texture, support, tol, zeros=x_zeros + z_zeros)
    n_w_alg = winding_algebraic(sections)
    flags = []
    if winding.n_w != n_w_alg:
        flags.append("winding_mismatch")
    if winding.unresolved_steps:
        flags.append("unresolved_turns")
    if abs(abs(winding.closure) - 0.5) < 1e-3:
        flags.append("marginal_closure")
    if support.gaps:
        flags.append("unresolved_gap")
    n_aw, n_ex = knot_counters(sections, x_zeros, winding.n_w)
    knots = diagonal_knots(texture, x_zeros, z_zeros, support, tol)
    if knots.uncertain:
        flags.append("tangential_knot")
    code = encode_topology(x_zeros, z_zeros, knots, bnd)
    summary = TopoSummary(
        parity=level.parity,
        n_Z=len(x_zeros) // 2,
        n_zx=winding.n_zx,
        n_w=winding.n_w,
        n_w_alg=n_w_alg,
        n_aw=n_aw,
        n_ex=n_ex,
        n_dk=knots.count,
        code=code,
        flags=tuple(flags),
    )
    return StateAnalysis(
        level=level, state=state, texture=texture, support=support,
        x_zeros=tuple(x_zeros), z_zeros=tuple(z_zeros), sections=sections,
        winding=winding, knots=knots, summary=summary,
    )


def analyze_state(
    params: ModelParams,
    j_e: int,
    n_points: int = DEFAULT_POINTS,
    tol: Tolerances = DEFAULT_TOL,
    spectrum=None,
) -> StateAnalysis:
    """Solve the model (unless ``spectrum`` is given) and analyze level ``j_e``."""
    if spectrum is None:
        spectrum = solve_spectrum(params)
    if not 1 <= j_e <= len(spectrum):
        raise ValidationError(f"j_e={j_e} outside the resolved levels 1..{len(spectrum)}")
    out = analyze_level(spectrum[j_e], default_grid(params, n_points), tol)
    gaps = [d for d in (spectrum.delta_minus(j_e), spectrum.delta_plus(j_e)) if d is not None]
    if gaps and min(gaps) < ORDER_TOL * params.Omega:
        summary = replace(out.summary, flags=out.summary.flags + ("unresolved_order",))
        out = replace(out, summary=summary)
    return out
