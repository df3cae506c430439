import functools

import pytest

from rabiknots.model import ModelParams, solve_spectrum
from rabiknots.topology import analyze_state

# (criterion, ok, detail) lines collected by the acceptance module
ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def spectrum_gs(g_over_gs, lam, n_cut=120):
    return solve_spectrum(ModelParams.from_gs(g_over_gs, lam=lam, n_cut=n_cut))


@functools.lru_cache(maxsize=None)
def analysis_gs(g_over_gs, lam, j_e, n_cut=120, n_points=4001):
    """Cached full analysis at g in units of g_s."""
    params = ModelParams.from_gs(g_over_gs, lam=lam, n_cut=n_cut)
    return analyze_state(params, j_e, n_points, spectrum=spectrum_gs(g_over_gs, lam, n_cut))


@pytest.fixture
def analysis():
    return analysis_gs


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
