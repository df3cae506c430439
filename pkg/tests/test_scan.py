import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import brentq

from rabiknots.errors import ValidationError
from rabiknots.model import ModelParams, critical_coupling, level_energies
from rabiknots.scan import (
    SweepSpec,
    classify_gap_events,
    params_at,
    phase_diagram,
    scan_point,
    scan_points,
    sweep_line,
)
from rabiknots.scan import _edge_min_gap

BASE = ModelParams()
GS = critical_coupling(BASE)


def jcm_branch(n, g, omega=0.5, Omega=1.0):
    """Lower JCM branch of the n-excitation doublet; n = 0 is the bare ground state."""
    if n == 0:
        return -Omega / 2
    return (n - 0.5) * omega - math.sqrt((Omega - omega) ** 2 / 4 + g * g * n)


def jcm_ground_crossings(g_max):
    """Couplings where the JCM ground state changes excitation number."""
    out = []
    n = 0
    gs = np.linspace(1e-9, g_max, 4001)
    while True:
        f = np.array([jcm_branch(n + 1, g) - jcm_branch(n, g) for g in gs])
        idx = np.nonzero(np.sign(f[:-1]) != np.sign(f[1:]))[0]
        if not len(idx):
            return out
        k = idx[0]
        root = brentq(lambda g: jcm_branch(n + 1, g) - jcm_branch(n, g), gs[k], gs[k + 1], xtol=1e-14)
        out.append(root)
        n += 1
        gs = gs[gs > root]


def test_sweepspec_validation():
    with pytest.raises(ValidationError, match="empty sweep range"):
        SweepSpec("g", 1.0, 1.0, 10, fixed=0.2)
    with pytest.raises(ValidationError, match="axis"):
        SweepSpec("omega", 0.0, 1.0, 10, fixed=0.2)
    with pytest.raises(ValidationError, match="at least 2"):
        SweepSpec("g", 0.0, 1.0, 1, fixed=0.2)
    with pytest.raises(ValidationError, match="g_unit"):
        SweepSpec("g", 0.0, 1.0, 5, fixed=0.2, g_unit="hbar")
    with pytest.raises(ValidationError):
        SweepSpec("g", 0.0, 1.0, 5, fixed=0.2, level=0)


def test_params_at_units():
    p = params_at(BASE, 2.0, 0.3, "gs")
    assert p.g == pytest.approx(2 * GS) and p.lam == 0.3
    assert params_at(BASE, 0.7, 0.3).g == 0.7


def test_sweep_is_deterministic():
    spec = SweepSpec("lambda", 0.0, 1.0, 5, fixed=1.5, level=2, g_unit="gs")
    assert sweep_line(spec) == sweep_line(spec)


def test_parallel_map_keeps_order():
    params = [params_at(BASE, g, 0.4, "gs") for g in (0.5, 1.5, 2.5)]
    serial = scan_points(params, (1, 3))
    assert scan_points(params, (1, 3), workers=2) == serial
    assert [recs[0].g for recs in serial] == [p.g for p in params]


def test_point_failures_are_recorded_inline():
    recs = scan_point(ModelParams(g=0.3, n_levels=4), (1, 40))
    assert recs[0].ok
    assert not recs[1].ok and "beyond" in recs[1].error


def test_lambda0_ground_crossings_match_jcm():
    spec = SweepSpec("g", 0.0, 4.0, 41, fixed=0.0, level=1, g_unit="gs")
    events = classify_gap_events(sweep_line(spec), spec)
    expected = [g / GS for g in jcm_ground_crossings(4.0 * GS)]
    crossings = [e for e in events if e.kind == "crossing" and e.gap == "plus"]
    assert len(crossings) == len(expected) >= 2
    assert expected[0] == pytest.approx(2.0, abs=1e-12)  # g = sqrt(omega Omega)
    for e, g in zip(crossings, expected):
        assert e.location == pytest.approx(g, abs=1e-6 / GS)
        assert e.parity_flip
    assert not [e for e in events if e.kind == "anticrossing"]


def test_lambda05_crossings_flip_parity_and_anticrossings_do_not():
    spec = SweepSpec("g", 0.0, 4.0, 81, fixed=0.5, level=2, g_unit="gs")
    events = [e for e in classify_gap_events(sweep_line(spec), spec) if not e.partial]
    assert any(e.kind == "crossing" for e in events)
    assert any(e.kind == "anticrossing" for e in events)
    for e in events:
        assert e.parity_flip == (e.kind == "crossing"), e


def test_ground_phase_diagram_boundaries():
    # lambda < 1: parity flips come with a closing gap; above lambda = 1 the
    # node gain near lambda 1.2 happens without either
    pd = phase_diagram(
        np.linspace(0.0, 4.0, 9), np.linspace(0.0, 0.8, 8), 1, g_unit="gs", refine=False
    )
    flips = [e for e in pd.boundaries if "parity" in e.jumps]
    assert flips and all(e.gap_closing and e.conventional for e in flips)
    assert all(e.gap_closing == ("parity" in e.jumps) for e in pd.boundaries)

    pd = phase_diagram(
        np.linspace(2.0, 2.4, 8), np.linspace(0.9, 1.4, 8), 1, g_unit="gs", refine=False
    )
    quiet = [e for e in pd.boundaries if "n_Z" in e.jumps and not e.gap_closing]
    assert quiet and all("parity" not in e.jumps for e in quiet)


def test_refinement_marks_only_boundary_cells():
    pd = phase_diagram(np.linspace(1.0, 3.0, 8), np.linspace(0.1, 0.5, 8), 1, g_unit="gs")
    touched = {c for e in pd.boundaries for c in (e.a, e.b)}
    for i, k in zip(*np.nonzero(pd.near_boundary)):
        rec = pd.records[i][k]
        assert (i, k) in touched or not rec.ok or rec.topo.flags


def test_ground_winding_is_counterclockwise_below_lambda_one():
    for g in (2.5, 3.5, 4.5):
        for lam in (0.2, 0.5):
            (rec,) = scan_point(params_at(BASE, g, lam, "gs"), (1,))
            assert rec.topo.n_w >= 0
    for lam in (2.0, 3.0):
        (rec,) = scan_point(params_at(BASE, 1.7, lam, "gs"), (1,))
        assert rec.topo.n_w < 0


def test_phase_diagram_validation():
    with pytest.raises(ValidationError):
        phase_diagram([1.0], [0.1, 0.2], 1)
    with pytest.raises(ValidationError):
        phase_diagram([1.0, 2.0], [0.1, 0.2], 0)


def test_edge_gap_search_closes_only_on_true_crossings():
    def edge(g0, g1, lam0, lam1):
        return replace(BASE, g=g0, lam=lam0), replace(BASE, g=g1, lam=lam1)

    # ground crossing of opposite-parity JCM branches at g = 2 g_s
    assert _edge_min_gap(*edge(1.9 * GS, 2.1 * GS, 0.0, 0.0), 1) < 1e-10
    # lower branches with 1 and 3 excitations share parity and cross exactly at lambda = 0
    g_star = brentq(lambda g: jcm_branch(3, g) - jcm_branch(1, g), 0.5, 3.0, xtol=1e-14)
    assert _edge_min_gap(*edge(g_star - 0.01, g_star + 0.013, 0.0, 0.0), 2) < 1e-6
    # at lambda = 0.5 the gap stays open; compare with a dense brute-force scan
    pa, pb = edge(g_star - 0.01, g_star + 0.013, 0.5, 0.5)
    brute = min(
        min(np.diff(level_energies(replace(pa, g=g), 3)[:3]))
        for g in np.linspace(pa.g, pb.g, 2001)
    )
    assert _edge_min_gap(pa, pb, 2) == pytest.approx(brute, rel=1e-3)
    assert brute > 1e-6
    # the ground node gain near lambda 1.17 at 2.2 g_s keeps a finite gap
    assert _edge_min_gap(*edge(2.2 * GS, 2.2 * GS, 1.15, 1.19), 1) > 1e-3
