"""Parameter sweeps, gap-event classification and g-lambda phase diagrams.

Levels are tracked by their energy-ordered index j_e, not by continuity, so
a node jump at a crossing is attributed to the fixed j_e slot.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import RabiKnotsError, ValidationError
from .model import ModelParams, critical_coupling, level_energies, solve_spectrum
from .realspace import DEFAULT_POINTS
from .topology import DEFAULT_TOL, Tolerances, TopoSummary, analyze_state

__all__ = [
    "GAP_ZERO_TOL",
    "RELIABILITY_FLAGS",
    "BOUNDARY_KEYS",
    "SweepSpec",
    "ScanRecord",
    "GapEvent",
    "BoundaryEdge",
    "PhaseDiagram",
    "params_at",
    "scan_point",
    "scan_points",
    "sweep_line",
    "classify_gap_events",
    "extract_boundaries",
    "phase_diagram",
    "phase_diagrams",
]

GAP_ZERO_TOL = 1e-6  # in units of Omega
BOUNDARY_KEYS = ("parity", "n_Z", "sign_n_w", "abs_n_w", "n_ex", "n_dk")
# flags that make a cell's counters untrustworthy; the rest are informational
RELIABILITY_FLAGS = ("unresolved_order", "unresolved_turns")
AXES = ("g", "lambda")
G_UNITS = ("omega", "gs")


def params_at(base: ModelParams, g: float, lam: float, g_unit: str = "omega") -> ModelParams:
    """``base`` with g (in ``g_unit``) and lambda replaced."""
    if g_unit not in G_UNITS:
        raise ValidationError(f"g_unit must be one of {G_UNITS}, got {g_unit!r}")
    if g_unit == "gs":
        g = g * critical_coupling(base)
    return replace(base, g=float(g), lam=float(lam))


@dataclass(frozen=True)
class SweepSpec:
    """Line through parameter space: ``axis`` runs over linspace(lo, hi, n),
    the other parameter is held at ``fixed``."""

    axis: str
    lo: float
    hi: float
    n: int
    fixed: float
    level: int = 1
    base: ModelParams = field(default_factory=ModelParams)
    g_unit: str = "omega"

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValidationError(f"sweep axis must be one of {AXES}, got {self.axis!r}")
        if not self.lo < self.hi:
            raise ValidationError(f"empty sweep range: lo={self.lo} must be < hi={self.hi}")
        if int(self.n) != self.n or self.n < 2:
            raise ValidationError(f"sweep needs at least 2 points, got {self.n}")
        if int(self.level) != self.level or self.level < 1:
            raise ValidationError(f"level j_e must be >= 1, got {self.level}")
        if self.g_unit not in G_UNITS:
            raise ValidationError(f"g_unit must be one of {G_UNITS}, got {self.g_unit!r}")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    def params(self, value: float) -> ModelParams:
        if self.axis == "g":
            return params_at(self.base, value, self.fixed, self.g_unit)
        return params_at(self.base, self.fixed, value, self.g_unit)


@dataclass(frozen=True)
class ScanRecord:
    g: float
    lam: float
    j_e: int
    energy: float = math.nan
    parity: int = 0
    delta_plus: float = None
    delta_minus: float = None
    topo: TopoSummary = None
    error: str = None
    g_s: float = 0.5

    @property
    def ok(self) -> bool:
        return self.error is None and self.topo is not None

    @property
    def g_over_gs(self) -> float:
        return self.g / self.g_s

    def boundary_key(self) -> dict:
        t = self.topo
        return {
            "parity": self.parity,
            "n_Z": t.n_Z,
            "sign_n_w": int(np.sign(t.n_w)),
            "abs_n_w": abs(t.n_w),
            "n_ex": t.n_ex,
            "n_dk": t.n_dk,
        }


@dataclass(frozen=True)
class GapEvent:
    location: float
    kind: str  # "crossing" | "anticrossing"
    gap_at_min: float
    parity_flip: bool
    node_jump: int
    gap: str  # "plus" (j_e, j_e+1) or "minus" (j_e-1, j_e)
    partial: bool = False


@dataclass(frozen=True)
class BoundaryEdge:
    a: tuple  # (i_g, i_lam)
    b: tuple
    jumps: tuple
    min_gap: float
    gap_closing: bool

    @property
    def conventional(self) -> bool:
        return self.gap_closing and "parity" in self.jumps


@dataclass
class PhaseDiagram:
    level: int
    g_values: np.ndarray
    lam_values: np.ndarray
    records: list  # records[i_g][i_lam]
    boundaries: list
    near_boundary: np.ndarray
    g_unit: str = "omega"

    @property
    def failures(self) -> int:
        return sum(not r.ok for row in self.records for r in row)

    def cells(self):
        for i, row in enumerate(self.records):
            for j, rec in enumerate(row):
                yield i, j, rec


# ---------------------------------------------------------------------------
# single points


def scan_point(params: ModelParams, levels, n_points: int = DEFAULT_POINTS, tol: Tolerances = DEFAULT_TOL):
    """Records for each j_e in ``levels`` at one parameter point.

    Failures (solver or topology) are stored in ``error`` instead of raised.
    """
    gs = critical_coupling(params)
    try:
        spectrum = solve_spectrum(params)
    except RabiKnotsError as exc:
        return [ScanRecord(params.g, params.lam, j, error=f"{type(exc).__name__}: {exc}", g_s=gs) for j in levels]
    out = []
    for j in levels:
        if j > len(spectrum):
            out.append(ScanRecord(params.g, params.lam, j, error=f"j_e={j} beyond resolved levels", g_s=gs))
            continue
        lv = spectrum[j]
        base = dict(
            g=params.g, lam=params.lam, j_e=j, energy=lv.energy, parity=lv.parity,
            delta_plus=spectrum.delta_plus(j), delta_minus=spectrum.delta_minus(j), g_s=gs,
        )
        try:
            topo = analyze_state(params, j, n_points, tol, spectrum=spectrum).summary
        except RabiKnotsError as exc:
            out.append(ScanRecord(**base, error=f"{type(exc).__name__}: {exc}"))
            continue
        out.append(ScanRecord(**base, topo=topo))
    return out


def _point_job(args):
    return scan_point(*args)


def scan_points(param_list, levels, n_points=DEFAULT_POINTS, tol=DEFAULT_TOL, workers: int = 1):
    """``scan_point`` over many parameter points; output order follows input."""
    jobs = [(p, tuple(levels), n_points, tol) for p in param_list]
    if workers is None or workers <= 1 or len(jobs) < 2:
        return [_point_job(j) for j in jobs]
    chunk = max(1, len(jobs) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_point_job, jobs, chunksize=chunk))


def sweep_line(spec: SweepSpec, n_points=DEFAULT_POINTS, tol=DEFAULT_TOL, workers: int = 1):
    """One ScanRecord per sweep value, in axis order."""
    params = [spec.params(v) for v in spec.values]
    return [recs[0] for recs in scan_points(params, (spec.level,), n_points, tol, workers)]


# ---------------------------------------------------------------------------
# gap events


def _gaps(params: ModelParams, j: int):
    """(delta_minus, delta_plus) of level j from energies alone."""
    e = level_energies(params, max(params.n_levels, j) + 1)
    lower = float(e[j - 1] - e[j - 2]) if j > 1 else None
    upper = float(e[j] - e[j - 1]) if j < len(e) else None
    return lower, upper


def _golden_min(f, a, b, c):
    fa, fb, fc = f(a), f(b), f(c)
    if fb < fa and fb < fc:
        res = minimize_scalar(f, bracket=(a, b, c), method="golden", tol=1e-10)
        if a <= res.x <= c:
            return float(res.x), float(res.fun)
    res = minimize_scalar(f, bounds=(a, c), method="bounded", options={"xatol": 1e-12})
    best = min((float(res.fun), float(res.x)), (fa, a), (fb, b), (fc, c))
    return best[1], best[0]


def classify_gap_events(records, spec: SweepSpec, gap_zero_tol: float = None):
    """Crossings and anticrossings met by the tracked level along a sweep.

    Local minima of the upper and lower gaps are refined by golden-section
    search.  A refined gap below ``gap_zero_tol`` (default 1e-6 Omega) is a
    crossing, otherwise an anticrossing.  With lambda = 0 the excitation
    number is conserved too, so crossings between equal-parity levels occur
    and are reported with ``parity_flip=False``.
    """
    if len(records) < 3:
        raise ValidationError("gap classification needs at least 3 records")
    if gap_zero_tol is None:
        gap_zero_tol = GAP_ZERO_TOL * spec.base.Omega
    vals = spec.values
    j = spec.level
    events = []
    for which, attr in (("minus", "delta_minus"), ("plus", "delta_plus")):
        d = np.array([np.nan if getattr(r, attr) is None else getattr(r, attr) for r in records])
        if np.all(np.isnan(d)):
            continue
        idx = 1 if which == "plus" else 0

        def gap(v, idx=idx):
            g = _gaps(spec.params(v), j)[idx]
            return math.inf if g is None else g

        n = len(d)
        for i in range(n):
            if np.isnan(d[i]):
                continue
            left = d[i - 1] if i > 0 else math.inf
            right = d[i + 1] if i < n - 1 else math.inf
            if not (d[i] < left and d[i] <= right):
                continue
            partial = i == 0 or i == n - 1
            if partial:
                # a gap still shrinking at the sweep end is no detected minimum
                if d[i] >= gap_zero_tol:
                    continue
                loc, gmin = float(vals[i]), float(d[i])
            else:
                loc, gmin = _golden_min(gap, vals[i - 1], vals[i], vals[i + 1])
            lo_i, hi_i = max(i - 1, 0), min(i + 1, n - 1)
            if gmin >= gap_zero_tol and not partial:
                # kink left by the neighbouring pair crossing, not a minimum of this gap
                if which == "plus":
                    neighbour = _gaps(spec.params(loc), j + 1)[1]
                else:
                    neighbour = _gaps(spec.params(loc), j - 1)[0] if j > 1 else None
                if neighbour is not None and neighbour < gap_zero_tol:
                    continue
            r0, r1 = records[lo_i], records[hi_i]
            flip = bool(r0.parity and r1.parity and r0.parity != r1.parity)
            jump = 0
            if r0.topo is not None and r1.topo is not None:
                jump = r1.topo.n_Z - r0.topo.n_Z
            events.append(
                GapEvent(
                    location=loc,
                    kind="crossing" if gmin < gap_zero_tol else "anticrossing",
                    gap_at_min=gmin,
                    parity_flip=flip,
                    node_jump=jump,
                    gap=which,
                    partial=partial,
                )
            )
    events.sort(key=lambda e: e.location)
    return events


# ---------------------------------------------------------------------------
# phase diagrams


_EDGE_SAMPLES = np.linspace(0.0, 1.0, 9)


def _along(pa: ModelParams, pb: ModelParams, t: float) -> ModelParams:
    return replace(pa, g=pa.g + t * (pb.g - pa.g), lam=pa.lam + t * (pb.lam - pa.lam))


def _level_gap(labelled, j):
    e, _ = labelled
    gaps = []
    if j > 1 and j - 1 < len(e):
        gaps.append((float(e[j - 1] - e[j - 2]), j - 2))
    if j < len(e):
        gaps.append((float(e[j] - e[j - 1]), j - 1))
    return min(gaps) if gaps else (math.inf, None)


def _edge_min_gap(pa: ModelParams, pb: ModelParams, j: int, cache=None):
    """Smallest gap next to level j along the segment pa -> pb.

    The segment is sampled on a few points (shared between levels through
    ``cache``).  When the two closest levels at the best sample belong to
    different parity blocks and their difference changes sign, the crossing
    is located by root finding; otherwise the gap is minimized directly.
    """
    k = max(pa.n_levels, j) + 1

    def spectrum(t):
        return level_energies(_along(pa, pb, t), k, labels=True)

    if cache is None:
        cache = {}
    key = (pa, pb, k)
    if key not in cache:
        cache[key] = [spectrum(t) for t in _EDGE_SAMPLES]
    samples = cache[key]
    values = [_level_gap(s, j) for s in samples]
    i = int(np.argmin([v for v, _ in values]))
    best, low = values[i]
    if low is None:
        return best
    lo = _EDGE_SAMPLES[max(i - 1, 0)]
    hi = _EDGE_SAMPLES[min(i + 1, len(_EDGE_SAMPLES) - 1)]
    (pa_, ia), (pb_, ib) = samples[i][1][low], samples[i][1][low + 1]
    if pa_ != pb_:

        def diff(t):
            e, lab = spectrum(t)
            where = {lv: x for x, lv in zip(e, lab)}
            return where[(pa_, ia)] - where[(pb_, ib)]

        try:
            d_lo, d_hi = diff(lo), diff(hi)
        except KeyError:
            d_lo = d_hi = 0.0
        if d_lo * d_hi < 0:
            t0 = brentq(diff, lo, hi, xtol=1e-12)
            return min(best, _level_gap(spectrum(t0), j)[0])

    def gap(t):
        return _level_gap(spectrum(t), j)[0]

    # For lam > 0 every off-diagonal of a parity block is nonzero, so levels
    # of one block never cross and the minimum here is an avoided crossing;
    # a coarse bracket decides it.  At lam = 0 equal-parity levels cross
    # exactly and need a tight one.
    xatol = 1e-10 if pa.lam == 0.0 and pb.lam == 0.0 else 1e-4
    res = minimize_scalar(gap, bounds=(lo, hi), method="bounded", options={"xatol": xatol})
    return min(best, float(res.fun))


def extract_boundaries(records, level: int, base: ModelParams, gap_zero_tol: float = None, cache=None):
    """Edges between adjacent cells whose counters differ.

    ``records[i_g][i_lam]``; each edge lists the jumping quantities and
    whether the tracked level's gap closes somewhere along it.
    """
    if gap_zero_tol is None:
        gap_zero_tol = GAP_ZERO_TOL * base.Omega
    ng = len(records)
    nl = len(records[0]) if ng else 0
    edges = []
    if cache is None:
        cache = {}
    for i in range(ng):
        for k in range(nl):
            ra = records[i][k]
            for di, dk in ((1, 0), (0, 1)):
                if i + di >= ng or k + dk >= nl:
                    continue
                rb = records[i + di][k + dk]
                if not (ra.ok and rb.ok):
                    continue
                ka, kb = ra.boundary_key(), rb.boundary_key()
                jumps = tuple(name for name in BOUNDARY_KEYS if ka[name] != kb[name])
                if not jumps:
                    continue
                pa = replace(base, g=ra.g, lam=ra.lam)
                pb = replace(base, g=rb.g, lam=rb.lam)
                gmin = _edge_min_gap(pa, pb, level, cache)
                edges.append(BoundaryEdge((i, k), (i + di, k + dk), jumps, gmin, gmin < gap_zero_tol))
    return edges


def _refined(base: ModelParams, n_points: int):
    return replace(base, n_cut=base.n_cut + 40), 2 * n_points - 1


def _counters(rec: ScanRecord):
    t = rec.topo
    return (rec.parity, t.n_Z, t.n_w, t.n_ex, t.n_dk)


def phase_diagrams(
    g_values,
    lam_values,
    levels,
    base: ModelParams = None,
    g_unit: str = "omega",
    n_points: int = DEFAULT_POINTS,
    tol: Tolerances = DEFAULT_TOL,
    workers: int = 1,
    refine: bool = True,
    gap_zero_tol: float = None,
):
    """Phase diagrams for several levels sharing one grid of spectra.

    Cells that touch a boundary edge are recomputed with n_cut + 40 and a
    doubled grid; they are marked near-boundary when any counter moves, when
    the analysis raised one of ``RELIABILITY_FLAGS``, or when the point
    failed.  A winding mismatch is deliberately not a reason to exclude.
    """
    base = base or ModelParams()
    g_values = np.asarray(g_values, dtype=float)
    lam_values = np.asarray(lam_values, dtype=float)
    if len(g_values) < 2 or len(lam_values) < 2:
        raise ValidationError("phase diagram needs at least 2 values per axis")
    levels = tuple(levels)
    if not levels or min(levels) < 1:
        raise ValidationError("levels must be j_e >= 1")
    ng, nl = len(g_values), len(lam_values)
    grid = [params_at(base, g, lam, g_unit) for g in g_values for lam in lam_values]
    flat = scan_points(grid, levels, n_points, tol, workers)
    out = {}
    edge_cache = {}
    for li, level in enumerate(levels):
        records = [[flat[i * nl + k][li] for k in range(nl)] for i in range(ng)]
        edges = extract_boundaries(records, level, base, gap_zero_tol, edge_cache)
        near = np.zeros((ng, nl), dtype=bool)
        for i in range(ng):
            for k in range(nl):
                r = records[i][k]
                near[i, k] = (not r.ok) or any(f in RELIABILITY_FLAGS for f in r.topo.flags)
        out[level] = PhaseDiagram(level, g_values, lam_values, records, edges, near, g_unit)
    if refine:
        touched = sorted({c for pd in out.values() for e in pd.boundaries for c in (e.a, e.b)})
        if touched:
            fine_base, fine_points = _refined(base, n_points)
            fine_params = [
                params_at(fine_base, g_values[i], lam_values[k], g_unit) for i, k in touched
            ]
            fine = scan_points(fine_params, levels, fine_points, tol, workers)
            for (i, k), recs in zip(touched, fine):
                for li, level in enumerate(levels):
                    coarse = out[level].records[i][k]
                    if not (coarse.ok and recs[li].ok) or _counters(coarse) != _counters(recs[li]):
                        out[level].near_boundary[i, k] = True
    return out


def phase_diagram(g_values, lam_values, level: int, **kwargs) -> PhaseDiagram:
    """Single-level convenience wrapper around :func:`phase_diagrams`."""
    return phase_diagrams(g_values, lam_values, (level,), **kwargs)[level]
