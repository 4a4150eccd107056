import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lpmfg.chain import transitions_from_coefficients
from lpmfg.domain import Grid, MomentVector, ProblemSpec, sample_coefficients

settings.register_profile("lpmfg", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lpmfg")


def const(c):
    return lambda t, x, z, a: c + 0.0 * x + 0.0 * a


def make_spec(name="custom", *, b=0.0, sigma=0.1, f=0.0, g=None, m0=None, a=(0.0, 0.0), **kw):
    """ProblemSpec with constant (or callable) coefficients on [0, 1]."""
    as_ev = lambda v: v if callable(v) else const(v)
    g = g if g is not None else (lambda t, x, w: 0.0 * x)
    if not callable(g):
        gval = g
        g = lambda t, x, w: gval + 0.0 * x
    m0 = m0 if m0 is not None else (lambda x: np.exp(-0.5 * ((x - 0.5) / 0.15) ** 2))
    return ProblemSpec(name=name, T=1.0, x_lo=0.0, x_hi=1.0, a_lo=a[0], a_hi=a[1],
                       barb=as_ev(b), barsigma=as_ev(sigma), barf=as_ev(f), barg=g, m0=m0, **kw)


def frozen(spec, grid, moments=None):
    moments = moments if moments is not None else MomentVector.zeros(grid, spec.d)
    coeffs = sample_coefficients(spec, grid, moments)
    return coeffs, transitions_from_coefficients(coeffs, grid, spec.boundary_mode)


@pytest.fixture
def small_grid():
    return Grid.uniform(1.0, 0.0, 1.0, 11, 9, [-1.0, 0.0, 1.0])


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
