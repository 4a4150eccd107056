import json
import warnings

import numpy as np
import pytest

from lpmfg import lp as lpmod
from lpmfg import mfg, verify
from lpmfg.chain import assemble_transition
from lpmfg.domain import ExitMeasure, MomentVector, OccupationFlow
from lpmfg.oracle import dp_from_coefficients
from lpmfg.registry import get_problem, random_problem

from conftest import frozen, make_spec


def solved(spec, grid):
    z = MomentVector.zeros(grid, spec.d)
    tr = assemble_transition(spec, grid, z)
    prog = lpmod.build_occupation_lp(spec, grid, tr, z)
    sol = lpmod.solve_lp(prog)
    mu, m = lpmod.extract_measures(prog, sol, grid)
    return prog, mu, m


def test_constraint_residual_zero_for_stop_at_start():
    spec = get_problem("stop-now")
    grid = spec.make_grid(6, 7, 1)
    prog, _, _ = solved(spec, grid)
    mu, m = mfg.stop_now_pair(spec, grid)
    r = verify.check_constraint_residual(m, mu, prog)
    assert r.residual == 0.0 and r.passed


def test_constraint_residual_detects_perturbation():
    spec = random_problem(0)
    grid = spec.make_grid(8, 9, 2)
    prog, mu, m = solved(spec, grid)
    vals = m.values.copy()
    k, i, j = np.argwhere(vals > 0.01)[0]
    vals[k, i, j] += 1e-3
    r = verify.check_constraint_residual(OccupationFlow(vals), mu, prog)
    assert r.residual == pytest.approx(1e-3, rel=1e-6)
    assert not r.passed


@pytest.mark.parametrize("name", ["stop-now", "never-stop", "martingale", "american-put-like"])
def test_value_equivalence_registry(name):
    spec = get_problem(name)
    grid = spec.make_grid(10, 11, 1)
    r = verify.check_value_equivalence(spec, grid, MomentVector.zeros(grid, spec.d))
    assert r.passed and r.residual <= 1e-9
    assert "LP" in r.note and "DP" in r.note


@pytest.mark.parametrize("name", ["american-put-like", "never-stop", "stop-now"])
def test_mixed_checks_on_frozen_problems(name):
    spec = get_problem(name)
    grid = spec.make_grid(20, 21, 1)
    _, mu, m = solved(spec, grid)
    coeffs, tr = frozen(spec, grid)
    vf = dp_from_coefficients(coeffs, grid, tr)
    checks = verify.check_mixed_solution(spec, grid, vf, m, mu)
    assert [c.name for c in checks] == ["mixed_a_contact", "mixed_b_continuation", "mixed_c_exit_mass"]
    assert all(c.passed for c in checks), checks


def test_mixed_check_flags_exit_in_continuation_region():
    spec = get_problem("never-stop")
    grid = spec.make_grid(10, 11, 1)
    coeffs, tr = frozen(spec, grid)
    vf = dp_from_coefficients(coeffs, grid, tr)
    mu, m = mfg.stop_now_pair(spec, grid)
    c = verify.check_mixed_solution(spec, grid, vf, m, mu)[2]
    assert c.residual == pytest.approx(1.0, abs=1e-12) and not c.passed


def test_mixed_check_warns_on_loose_contact_tolerance():
    spec = get_problem("stop-now")
    grid = spec.make_grid(5, 7, 1)
    _, mu, m = solved(spec, grid)
    coeffs, tr = frozen(spec, grid)
    vf = dp_from_coefficients(coeffs, grid, tr)
    with pytest.warns(RuntimeWarning, match="looser"):
        verify.check_mixed_solution(spec, grid, vf, m, mu, rtol=1e-9, contact_rtol=1e-6)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        verify.check_mixed_solution(spec, grid, vf, m, mu)


def test_strict_control_skipped_without_convexity():
    spec = random_problem(0)
    grid = spec.make_grid(8, 9, 3)
    _, mu, m = solved(spec, grid)
    r = verify.check_strict_control(spec, grid, m, mu)
    assert r.passed and r.note.startswith("skipped")


def test_strict_control_single_action_is_exact():
    spec = make_spec(f=lambda t, x, z, a: np.sin(6 * x) + 0 * a, g=lambda t, x, w: 0.3 * x,
                     convex_k=True)
    grid = spec.make_grid(10, 11, 1)
    _, mu, m = solved(spec, grid)
    r = verify.check_strict_control(spec, grid, m, mu)
    assert r.passed and r.residual <= 1e-12


def test_strict_control_convex_instance():
    base = random_problem(3)
    spec = make_spec(b=base.barb, sigma=base.barsigma, f=base.barf, g=base.barg, m0=base.m0,
                     a=(-1, 1), convex_k=True)
    grid = spec.make_grid(12, 13, 5)
    _, mu, m = solved(spec, grid)
    r = verify.check_strict_control(spec, grid, m, mu)
    assert r.passed, r


def test_report_overall_and_json():
    spec = get_problem("american-put-like")
    grid = spec.make_grid(10, 11, 1)
    _, mu, m = solved(spec, grid)
    rep = verify.certify(spec, grid, mu, m)
    assert rep.overall
    d = json.loads(rep.to_json())
    assert d["overall"] is True
    names = [c["name"] for c in d["checks"]]
    assert names == sorted(names)
    assert set(d["checks"][0]) == {"name", "residual", "tol", "pass", "note"}
    assert rep.to_json() == verify.certify(spec, grid, mu, m).to_json()
    assert d["notes"] and "lateral boundary" in d["notes"][0]
    # a broken candidate fails overall
    bad = verify.certify(spec, grid, ExitMeasure(mu.values * 0.5), m)
    assert not bad.overall and not bad["constraint_residual"].passed


def test_certify_with_equilibrium_check():
    spec = get_problem("congestion-mfg")
    grid = spec.make_grid(10, 11, 3)
    r = mfg.fixed_point_solve(spec, grid, tol=1e-8)
    rep = verify.certify(spec, grid, r.mu_star, r.m_star, equilibrium_tol=1e-6)
    assert rep["exploitability"].passed
    assert rep["constraint_residual"].passed


def test_no_boundary_note_when_obstacle_vanishes_there():
    spec = get_problem("never-stop")
    grid = spec.make_grid(8, 9, 1)
    _, mu, m = solved(spec, grid)
    assert verify.certify(spec, grid, mu, m).notes == []
