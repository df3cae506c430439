import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from rabiknots.errors import ConsistencyError, DegenerateTextureError
from rabiknots.model import ModelParams, solve_spectrum
from rabiknots.realspace import default_grid, spin_texture, to_position
from rabiknots.topology import (
    AxisZero,
    DiagonalKnots,
    KnotCrossing,
    Tolerances,
    _polyline_crossings,
    analyze_state,
    code_winding,
    encode_topology,
    find_sigma_x_zeros,
    find_sigma_z_zeros,
    knot_counters,
    resolved_support,
    sort_nodes,
    winding_algebraic,
)

# half-axes in counterclockwise order: +s_z (1), +s_x (2), -s_z (3), -s_x (4)
_AXIS = {"1": ("sigma_x_zero", 1), "3": ("sigma_x_zero", -1), "2": ("sigma_z_zero", 1), "4": ("sigma_z_zero", -1)}


def zeros_from_code(code):
    """AxisZero lists (x zeros, z zeros, boundary) for a digit code."""
    body, _, bnd = code.partition("~")
    xs, zs = [], []
    for k, d in enumerate(body):
        if d == "5":
            continue
        axis, sign = _AXIS[d]
        (xs if axis == "sigma_x_zero" else zs).append(AxisZero(float(k), axis, sign, "synthetic"))
    boundary = AxisZero(math.inf, "sigma_z_zero", _AXIS[bnd][1], "boundary", boundary=True)
    return xs, zs, boundary


def algebraic(code):
    xs, zs, b = zeros_from_code(code)
    return winding_algebraic(sort_nodes(xs, zs, b))


# ---------------------------------------------------------------------------
# node sorting and algebraic winding on synthetic sequences


def test_knotless_counterclockwise_eight_sections():
    code = "1234" * 4 + "~" + "1234"[0]
    # eight selected zeros alternate 1/3, every section holds one z zero
    code = "12341234123412341234123412341234"[:-1] + "~4"
    xs, zs, b = zeros_from_code(code)
    sec = sort_nodes(xs, zs, b)
    assert len(sec.selected) == 16 and all(m == 1 for m in sec.m)
    assert winding_algebraic(sec) == 8 == code_winding(code)
    short = "1234123412341234123412341234123~4"
    xs, zs, b = zeros_from_code(short)
    assert winding_algebraic(sort_nodes(xs, zs, b)) == 8


def test_four_turn_sequence():
    code = "123412341234123~4"
    assert algebraic(code) == 4 == code_winding(code)


def test_empty_selection_is_one_wrap_section():
    xs, zs, b = zeros_from_code("4~4")
    sec = sort_nodes(xs, zs, b)
    assert sec.selected == () and sec.wrap_section_index == 0
    assert sec.m == (2,)
    assert winding_algebraic(sec) == 0
    assert knot_counters(sec, xs, 0) == (0, 1)


def test_clockwise_sequence_negative():
    code = "143214321444321432143~2"
    assert algebraic(code) == code_winding(code) == -5


def test_repeated_sigma_x_zero_not_selected():
    xs, zs, b = zeros_from_code("1121233~4")
    sec = sort_nodes(xs, zs, b)
    assert [z.companion_sign for z in sec.selected] == [1, -1]


def test_negative_anti_winding_is_error():
    xs, zs, b = zeros_from_code("1234~4")
    sec = sort_nodes(xs, zs, b)
    with pytest.raises(ConsistencyError):
        knot_counters(sec, xs[:0], 1)


def test_code_winding_rejects_jump_across_origin():
    with pytest.raises(ConsistencyError):
        code_winding("13~4")


# quadrants Q1..Q4 as 0..3; moving between q and q+1 crosses half-axis _WALL[q]
_WALL = "2341"
_SWAP = str.maketrans("13", "31")


def _wall(q, nxt):
    return _WALL[q] if nxt == (q + 1) % 4 else _WALL[nxt]


@st.composite
def symmetric_walks(draw):
    """Random trajectories with the x -> -x mirror symmetry of an eigenstate.

    The half walk for x < 0 is drawn at random; x = 0 crosses the s_x axis
    and the x > 0 half is its mirror image (s_z -> -s_z), so sigma_x digits
    swap 1 <-> 3 while sigma_z digits keep their sign.
    """
    q0 = draw(st.integers(0, 3))
    q = q0
    half = []
    for step in draw(st.lists(st.sampled_from([-1, 1]), max_size=30)):
        nxt = (q + step) % 4
        half.append(_wall(q, nxt))
        q = nxt
    centre = "2" if q in (0, 1) else "4"
    boundary = "2" if q0 in (0, 1) else "4"
    body = "".join(half) + centre + "".join(reversed(half)).translate(_SWAP)
    return body + "~" + boundary


@settings(max_examples=300, deadline=None)
@given(symmetric_walks())
def test_algebraic_matches_quarter_count(code):
    assert algebraic(code) == code_winding(code)


def test_encode_orders_knots_by_smaller_location():
    xs, zs, b = zeros_from_code("1234~4")
    knots = DiagonalKnots((KnotCrossing(1.5, 1.8, 0.1, 0.1, 30.0),))
    assert encode_topology(xs, zs, knots, b) == "12534~4"


def test_nodal_cubic_crosses_once():
    t = np.linspace(-1.7, 1.7, 501)
    P = np.column_stack((t * t - 1.0, t * (t * t - 1.0))) + 3.0
    hits = _polyline_crossings(P)
    assert len(hits) == 1
    i, j, ti, uj = hits[0]
    x1 = t[i] + ti * (t[i + 1] - t[i])
    x2 = t[j] + uj * (t[j + 1] - t[j])
    assert x1 == pytest.approx(-1.0, abs=1e-4) and x2 == pytest.approx(1.0, abs=1e-4)


def test_simple_arc_has_no_crossing():
    t = np.linspace(0, np.pi / 2, 200)
    assert _polyline_crossings(np.column_stack((np.cos(t), np.sin(t)))) == []


# ---------------------------------------------------------------------------
# real states


def test_ground_state_without_nodes(analysis):
    a = analysis(1.5, 0.2, 1)
    assert len(a.x_zeros) == 0 and a.summary.n_Z == 0


def test_ground_state_two_node_pairs(analysis):
    a = analysis(4.4, 0.2, 1)
    assert len(a.x_zeros) == 4
    assert (a.summary.n_Z, a.summary.n_w) == (2, 2)


def test_fixed_excited_state_counters(analysis):
    s = analysis(1.0, 0.2, 5).summary
    assert s.n_Z == 1 and s.n_ex == 2


def test_zeros_are_wavefunction_roots(analysis):
    a = analysis(1.2, 1.5, 5)
    amax = a.support.amp_max
    for z in a.x_zeros:
        p, m = a.state.evaluate(np.array([z.x]))
        val = p[0] if z.source == "psi_plus" else m[0]
        assert abs(val) <= 1e-8 * amax
    plus = sorted(z.x for z in a.x_zeros if z.source == "psi_plus")
    minus = sorted(z.x for z in a.x_zeros if z.source == "psi_minus")
    np.testing.assert_allclose(plus, -np.array(minus[::-1]), atol=1e-8)


def test_origin_is_sigma_z_zero(analysis):
    a = analysis(1.7, 2.0, 1)
    z0 = [z for z in a.z_zeros if z.x == 0.0]
    assert len(z0) == 1
    assert z0[0].companion_sign == int(np.sign(a.texture.evaluate(np.array([0.0]))[1][0]))


def test_small_knot_section(analysis):
    a = analysis(1.7, 3.0, 5)
    assert 3 in a.sections.m
    assert "444" in a.summary.code


def test_bridge_knot_discount(analysis):
    s = analysis(0.9, 0.8, 5).summary
    assert abs(s.n_w_alg) < s.n_Z


@pytest.mark.parametrize("g,lam,count", [(3.4, 0.8, 2), (0.22, 2.0, 4), (1.5, 0.2, 0)])
def test_diagonal_knot_counts(analysis, g, lam, count):
    a = analysis(g, lam, 5)
    assert a.knots.count == count
    for c in a.knots.crossings:
        assert c.x1 < c.x2
        assert np.sign(c.s_z) != 0 and np.sign(c.s_x) != 0


def test_knotless_ground_state_has_no_diagonal_knot(analysis):
    assert analysis(0.5, 0.2, 1).knots.count == 0


def test_uncoupled_state_is_degenerate():
    p = ModelParams(g=0.0)
    a = analyze_state(p, 1)
    assert a.summary.degenerate and a.summary.n_w == 0 and a.summary.code == ""
    st_ = to_position(solve_spectrum(p)[1], default_grid(p))
    tx = spin_texture(st_)
    with pytest.raises(DegenerateTextureError):
        find_sigma_z_zeros(st_, tx)
    assert find_sigma_x_zeros(st_, tx, require_companion=False) == []


def test_uncoupled_excited_state_counts_nodes():
    # level 2 at g = 0 is one photon in the lower spin state: a node at x = 0
    a = analyze_state(ModelParams(g=0.0), 2)
    assert a.summary.degenerate and a.summary.n_Z == 1 and a.summary.n_aw == 1
    assert [z.x for z in a.x_zeros] == [0.0, 0.0]


def test_support_edge_and_boundary_sign(analysis):
    a = analysis(1.5, 0.2, 5)
    sup = a.support
    assert a.state.x[sup.i_lo] == -a.state.x[sup.i_hi]
    assert sup.boundary_sign == int(np.sign(a.texture.s_x[sup.i_hi]))
    assert a.summary.code.endswith("~" + ("2" if sup.boundary_sign > 0 else "4"))


def test_tail_threshold_changes_tail_node():
    # a resolved node pair far out in the tail is kept only with the default threshold
    p = ModelParams.from_gs(0.4, lam=2.0)
    fine = analyze_state(p, 5).summary
    coarse = analyze_state(p, 5, tol=Tolerances(eps_tail=1e-6)).summary
    assert fine.n_Z == coarse.n_Z + 1
    assert fine.n_w == fine.n_w_alg and coarse.n_w == coarse.n_w_alg


def check_invariants(a):
    s = a.summary
    assert s.n_w == s.n_w_alg
    assert s.n_aw == s.n_Z - abs(s.n_w) >= 0
    assert abs(s.n_zx - s.n_w) <= 0.5
    assert min(s.n_Z, s.n_ex, s.n_dk) >= 0
    body = s.code.split("~")[0]
    assert sum(body.count(d) for d in "13") == 2 * s.n_Z
    assert body.count("5") == s.n_dk
    assert code_winding(s.code) == s.n_w
    for i, sec in enumerate(a.sections.sections):
        if i != a.sections.wrap_section_index:
            assert sec.m % 2 == 1
    if s.n_ex % 2:
        assert a.sections.selected == ()
    S = a.sections.S
    assert all(S[k] == -S[k + 1] for k in range(len(S) - 1))


@pytest.mark.parametrize(
    "g,lam,j", [(1.0, 0.2, 5), (0.1, 3.0, 5), (1.2, 1.5, 5), (3.4, 0.8, 5), (0.4, 2.0, 5), (0.22, 2.0, 5),
                (1.7, 3.0, 5), (4.4, 0.2, 1), (1.7, 2.0, 1)]
)
def test_invariants_reference_states(analysis, g, lam, j):
    check_invariants(analysis(g, lam, j))


@settings(max_examples=40, deadline=None)
@given(g=st.floats(0.02, 5.0), lam=st.floats(0.0, 3.0), j_e=st.integers(1, 6))
def test_invariants_random_states(g, lam, j_e):
    check_invariants(analyze_state(ModelParams.from_gs(g, lam=lam), j_e))


def test_loop_tighter_than_grid_step_is_counted():
    # four axis zeros within 0.008 < h: the trajectory circles the origin
    # inside one grid step on each side
    a = analyze_state(ModelParams.from_gs(2.051282051282051, lam=1.0256410256410255), 5)
    xs = sorted(z.x for z in a.x_zeros + a.z_zeros if z.x < -2.5 and z.x > -2.7)
    assert len(xs) == 4 and xs[-1] - xs[0] < a.state.grid.h
    assert a.summary.n_w == a.summary.n_w_alg == 4
    assert "winding_mismatch" not in a.summary.flags


def test_separated_packets_bridge_the_dark_gap():
    a = analyze_state(ModelParams.from_gs(4.0, lam=3.0), 1)
    assert a.support.gaps and "unresolved_gap" in a.summary.flags
    (L, R), = a.support.gaps
    x = a.state.x
    assert x[L] < 0 < x[R]
    # the chord across the mirror-symmetric gap crosses the s_x axis at x = 0
    gap = [z for z in a.z_zeros if z.source == "gap"]
    assert len(gap) == 1 and gap[0].x == pytest.approx(0.0, abs=1e-12)
    plus = sorted(z.x for z in a.x_zeros if z.source == "psi_plus")
    minus = sorted(z.x for z in a.x_zeros if z.source == "psi_minus")
    assert np.allclose(plus, [-v for v in minus[::-1]], atol=0)
    assert a.summary.n_w == a.summary.n_w_alg


def test_single_dark_sample_is_a_node_not_a_gap():
    # at g = 0 both components vanish exactly at x = 0 and nowhere else
    a = analyze_state(ModelParams(g=0.0), 2)
    assert a.support.gaps == ()


def test_degenerate_doublet_is_flagged():
    # deep-strong ground doublet split by less than solver precision
    a = analyze_state(ModelParams.from_gs(3.974358974358974, lam=1.8974358974358974), 1)
    assert "unresolved_order" in a.summary.flags
    b = analyze_state(ModelParams.from_gs(1.5, lam=0.2), 1)
    assert "unresolved_order" not in b.summary.flags
