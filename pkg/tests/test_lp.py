import io

import numpy as np
import pytest
from scipy.optimize import linprog

from lpmfg import kernels
from lpmfg import lp as lpmod
from lpmfg.domain import ExitMeasure, Grid, MomentVector, OccupationFlow, ShapeError, objective_value
from lpmfg.oracle import dp_from_coefficients, dp_value_at_zero
from lpmfg.registry import get_problem, random_problem

from conftest import frozen, make_spec


def tiny(g0, gT):
    """Two time nodes, one interior state, one action, frozen state."""
    spec = make_spec(sigma=0.0, boundary_mode="unattainable",
                     g=lambda t, x, w: (g0 if t == 0 else gT) + 0.0 * x)
    grid = Grid.uniform(1.0, 0.0, 1.0, 2, 3, [0.0])
    coeffs, tr = frozen(spec, grid)
    return spec, grid, lpmod.build_from_coefficients(coeffs, grid, tr, spec.initial_weights(grid))


def test_smallest_instance_layout():
    _, _, prog = tiny(0.0, 1.0)
    assert prog.n_vars == 3
    assert sorted(prog.var_names()) == ["m_0_1_0", "mu_0_1", "mu_1_1"]
    A = prog.A.toarray()
    names = prog.var_names()
    col = {n: names.index(n) for n in names}
    r0, r1 = prog.row_of[0, 1], prog.row_of[1, 1]
    # m[0] + mu[0] = 1 ; mu[1] - m[0] = 0
    assert A[r0, col["m_0_1_0"]] == 1 and A[r0, col["mu_0_1"]] == 1 and prog.rhs[r0] == 1
    assert A[r1, col["mu_1_1"]] == 1 and A[r1, col["m_0_1_0"]] == -1 and prog.rhs[r1] == 0


def test_smallest_instance_stop_at_T():
    _, grid, prog = tiny(0.0, 1.0)
    sol = lpmod.solve_lp(prog)
    assert sol.status == "optimal" and sol.value == pytest.approx(1.0)
    mu, m = lpmod.extract_measures(prog, sol, grid)
    assert m.values[0, 1, 0] == pytest.approx(1.0)
    assert mu.values[1, 1] == pytest.approx(1.0)


def test_smallest_instance_stop_now():
    _, grid, prog = tiny(1.0, 0.0)
    sol = lpmod.solve_lp(prog)
    assert sol.value == pytest.approx(1.0)
    mu, m = lpmod.extract_measures(prog, sol, grid)
    assert mu.values[0, 1] == pytest.approx(1.0) and m.values.sum() == 0


def _random_policy_flow(spec, grid, tr, seed):
    rng = np.random.default_rng(seed)
    stop = rng.uniform(0, 0.4, (grid.K, grid.x_count))
    stop[:, [0, -1]] = 1.0
    ctrl = rng.dirichlet(np.ones(grid.a_count), (grid.K, grid.x_count))
    m, mu = kernels.push_forward(spec.initial_weights(grid), stop, ctrl, tr.p_stay, tr.p_up, tr.p_down)
    return ExitMeasure(mu), OccupationFlow(m)


def test_zero_rewards_give_zero_objective():
    spec = make_spec(sigma=0.1, a=(-1, 1))
    grid = spec.make_grid(8, 9, 3)
    coeffs, tr = frozen(spec, grid)
    prog = lpmod.build_from_coefficients(coeffs, grid, tr, spec.initial_weights(grid))
    assert lpmod.solve_lp(prog).value == 0.0
    for s in range(5):
        mu, m = _random_policy_flow(spec, grid, tr, s)
        assert objective_value(coeffs, grid, mu, m) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_rows_sum_to_total_mass_identity(seed):
    spec = random_problem(seed)
    grid = spec.make_grid(12, 11, 3)
    coeffs, tr = frozen(spec, grid)
    prog = lpmod.build_from_coefficients(coeffs, grid, tr, spec.initial_weights(grid))
    colsum = np.asarray(prog.A.sum(axis=0)).ravel()
    m_cols = prog.m_index[prog.m_index >= 0]
    mu_cols = prog.mu_index[prog.mu_index >= 0]
    np.testing.assert_allclose(colsum[m_cols], 0.0, atol=1e-12)
    np.testing.assert_allclose(colsum[mu_cols], 1.0, atol=0)
    assert prog.rhs.sum() == pytest.approx(1.0, abs=1e-12)


def test_index_map_is_bijective():
    spec = random_problem(1)
    grid = spec.make_grid(6, 7, 2)
    coeffs, tr = frozen(spec, grid)
    prog = lpmod.build_from_coefficients(coeffs, grid, tr, spec.initial_weights(grid))
    imap = prog.index_map()
    assert sorted(imap) == list(range(prog.n_vars))
    assert len(set(imap.values())) == prog.n_vars
    assert len(set(prog.var_names())) == prog.n_vars


@pytest.mark.parametrize("seed", range(4))
def test_solution_feasible_and_subprobability(seed):
    spec = random_problem(seed)
    grid = spec.make_grid(15, 15, 3)
    coeffs, tr = frozen(spec, grid)
    prog = lpmod.build_from_coefficients(coeffs, grid, tr, spec.initial_weights(grid))
    sol = lpmod.solve_lp(prog)
    assert lpmod.residual(prog, sol.primal) <= 1e-8 and sol.primal.min() >= -1e-10
    mu, m = lpmod.extract_measures(prog, sol, grid)
    mu.check(grid)
    m.check(grid)
    v, stray = lpmod.measures_to_vector(prog, mu, m)
    assert lpmod.residual(prog, v) <= 1e-8 and stray == 0.0
    assert objective_value(coeffs, grid, mu, m) == pytest.approx(sol.value, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_policy_flows_are_admissible(seed):
    spec = random_problem(seed + 10)
    grid = spec.make_grid(12, 13, 3)
    coeffs, tr = frozen(spec, grid)
    prog = lpmod.build_from_coefficients(coeffs, grid, tr, spec.initial_weights(grid))
    mu, m = _random_policy_flow(spec, grid, tr, seed)
    v, stray = lpmod.measures_to_vector(prog, mu, m)
    assert lpmod.residual(prog, v) <= 1e-9 and stray == 0.0


@pytest.mark.parametrize("seed", range(6))
def test_lp_value_matches_dp(seed):
    spec = random_problem(seed, boundary_mode="attainable")
    grid = spec.make_grid(20, 15, 4)
    coeffs, tr = frozen(spec, grid)
    prog = lpmod.build_from_coefficients(coeffs, grid, tr, spec.initial_weights(grid))
    v_lp = lpmod.solve_lp(prog).value
    v_dp = dp_value_at_zero(dp_from_coefficients(coeffs, grid, tr), spec, grid)
    assert abs(v_lp - v_dp) <= 1e-9 * (1 + abs(v_dp))


def test_value_monotone_in_g():
    base = random_problem(4)
    grid = base.make_grid(12, 11, 3)
    vals = []
    for bump in (0.0, 0.05, 0.3):
        spec = make_spec(b=base.barb, sigma=base.barsigma, f=base.barf, m0=base.m0, a=(-1, 1),
                         g=lambda t, x, w, bump=bump: base.barg(t, x, w) + bump * np.sin(7 * x) ** 2)
        coeffs, tr = frozen(spec, grid)
        prog = lpmod.build_from_coefficients(coeffs, grid, tr, spec.initial_weights(grid))
        vals.append(lpmod.solve_lp(prog).value)
    assert vals[0] <= vals[1] + 1e-12 <= vals[2] + 2e-12


def test_extract_requires_optimal():
    _, grid, prog = tiny(0.0, 1.0)
    bad = lpmod.LPSolution("infeasible", np.nan, np.zeros(3), np.zeros(2))
    with pytest.raises(lpmod.SolverStateError):
        lpmod.extract_measures(prog, bad, grid)


def test_extract_clips_roundoff_only():
    _, grid, prog = tiny(0.0, 1.0)
    sol = lpmod.solve_lp(prog)
    x = sol.primal.copy()
    x[x == 0] = -5e-11
    mu, m = lpmod.extract_measures(prog, lpmod.LPSolution("optimal", 1.0, x, sol.dual), grid)
    assert mu.values.min() >= 0 and m.values.min() >= 0
    x[0] = -1e-6
    with pytest.raises(lpmod.SolverStateError, match="negative"):
        lpmod.extract_measures(prog, lpmod.LPSolution("optimal", 1.0, x, sol.dual), grid)


def test_shape_errors():
    spec, grid, _ = tiny(0.0, 1.0)
    coeffs, tr = frozen(spec, grid)
    with pytest.raises(ShapeError):
        lpmod.build_from_coefficients(coeffs, grid, tr, np.ones(4))
    other = Grid.uniform(1.0, 0.0, 1.0, 3, 3, [0.0])
    with pytest.raises(ShapeError):
        lpmod.build_from_coefficients(coeffs, other, tr, np.ones(3))


def test_mps_round_trip_and_third_party_solve():
    spec = get_problem("american-put-like")
    grid = spec.make_grid(10, 9, 1)
    coeffs, tr = frozen(spec, grid)
    prog = lpmod.build_from_coefficients(coeffs, grid, tr, spec.initial_weights(grid))
    buf = io.StringIO()
    lpmod.write_mps(prog, buf)
    text = buf.getvalue()
    assert text.splitlines()[0].startswith("NAME") and "OBJSENSE" in text
    c, A, rhs, cols, rows, maximize = lpmod.read_mps(io.StringIO(text))
    assert maximize and cols == prog.var_names() and rows == prog.row_names()
    assert np.array_equal(c, prog.objective) and np.array_equal(rhs, prog.rhs)
    assert (abs(A - prog.A)).max() == 0
    ref = linprog(-c, A_eq=A, b_eq=rhs, bounds=(0, None), method="highs")
    assert -ref.fun == pytest.approx(lpmod.solve_lp(prog).value, abs=1e-9)
