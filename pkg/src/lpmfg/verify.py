"""Post-solve certification: residual checks that a solution is what it claims.

Every check returns a :class:`CheckResult`; :func:`certify` bundles them into
a :class:`CertificationReport`, sorted by check name.  Thresholds scale with
``1 + |value|`` where a value is involved.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import kernels
from . import lp as lpmod
from .chain import TransitionModel, transitions_from_coefficients
from .domain import (ExitMeasure, Grid, MomentVector, OccupationFlow, ProblemSpec, moment_of,
                     objective_value, sample_coefficients)
from .oracle import ValueFunction, dp_from_coefficients, dp_value_at_zero

CONSTRAINT_TOL = 1e-8
VALUE_RTOL = 1e-6
MIXED_RTOL = 1e-6
EXIT_TOL = 1e-6


@dataclass
class CheckResult:
    name: str
    residual: float
    tol: float
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


@dataclass
class CertificationReport:
    checks: List[CheckResult] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.checks = sorted(self.checks, key=lambda c: c.name)

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"overall": self.overall, "checks": [c.to_dict() for c in self.checks],
                "notes": list(self.notes)}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _scaled(x: float) -> float:
    return 1.0 + abs(x)


def _frozen(spec: ProblemSpec, grid: Grid, moments: MomentVector):
    coeffs = sample_coefficients(spec, grid, moments)
    trans = transitions_from_coefficients(coeffs, grid, spec.boundary_mode)
    return coeffs, trans


# ---------------------------------------------------------------- checks


def check_constraint_residual(m: OccupationFlow, mu: ExitMeasure, lp: lpmod.LinearProgram,
                              tol: float = CONSTRAINT_TOL) -> CheckResult:
    """``max |A v - rhs|`` for the LP vector of ``(mu, m)``.

    Mass on slots without an LP variable counts as a violation too.
    """
    v, stray = lpmod.measures_to_vector(lp, mu, m)
    r = max(lpmod.residual(lp, v), stray)
    return CheckResult("constraint_residual", r, tol, bool(r <= tol))


def check_value_equivalence(spec: ProblemSpec, grid: Grid, moments: MomentVector,
                            rtol: float = VALUE_RTOL, lp_tol: float = 1e-9) -> CheckResult:
    """Optimal LP value against backward induction on the same chain."""
    coeffs, trans = _frozen(spec, grid, moments)
    m0 = spec.initial_weights(grid)
    prog = lpmod.build_from_coefficients(coeffs, grid, trans, m0)
    sol = lpmod.solve_lp(prog, tol=lp_tol)
    vf = dp_from_coefficients(coeffs, grid, trans)
    v_dp = dp_value_at_zero(vf, spec, m0=m0)
    if sol.status != "optimal":
        return CheckResult("value_equivalence", float("inf"), rtol * _scaled(v_dp), False,
                           f"LP status {sol.status}")
    gap = abs(sol.value - v_dp)
    tol = rtol * _scaled(v_dp)
    return CheckResult("value_equivalence", gap, tol, bool(gap <= tol),
                       f"LP {sol.value!r}, DP {v_dp!r}")


def _generator(h_next: np.ndarray, h_now: np.ndarray, trans: TransitionModel, k: int,
               dt: float) -> np.ndarray:
    """Discrete ``(d/dt + L) h`` on slice ``k``: ``(E[h_{k+1}] - h_k) / dt``."""
    return (trans.expectation(h_next, k) - h_now[:, None]) / dt


def check_mixed_solution(spec: ProblemSpec, grid: Grid, vf: ValueFunction, m_star: OccupationFlow,
                         mu_star: ExitMeasure, rtol: float = MIXED_RTOL, exit_tol: float = EXIT_TOL,
                         contact_rtol: float = 1e-8) -> Tuple[CheckResult, CheckResult, CheckResult]:
    """Discrete complementarity between an LP optimiser and the value function.

    With ``S`` the contact set ``{v = g}`` and ``C`` its complement:

    (a) ``sum_{S x A} (f + D g) m dt`` vanishes,
    (b) ``sum_{C x A} (f + D v) m dt`` vanishes,
    (c) ``mu`` puts no mass on interior nodes of ``C`` before ``T``,

    where ``D h = (E[h_next] - h) / dt`` on the chain.  ``vf`` must come from
    the field frozen at the moments of ``(mu_star, m_star)``.
    """
    if contact_rtol > rtol:
        warnings.warn(f"contact tolerance {contact_rtol:g} is looser than the residual "
                      f"tolerance {rtol:g}", RuntimeWarning, stacklevel=2)
    coeffs, trans = _frozen(spec, grid, moment_of(m_star, mu_star, spec, grid))
    K, dt = grid.K, grid.dt
    contact = (vf.v - vf.g) <= contact_rtol * (1.0 + np.abs(vf.v))
    interior = grid.interior
    m = m_star.values
    ra = rb = 0.0
    for k in range(K):
        dg = coeffs.f[k] + _generator(vf.g[k + 1], vf.g[k], trans, k, dt)
        dv = coeffs.f[k] + _generator(vf.v[k + 1], vf.v[k], trans, k, dt)
        on_s = (contact[k] & interior)[:, None]
        on_c = (~contact[k] & interior)[:, None]
        ra += float(np.sum(np.where(on_s, dg * m[k], 0.0))) * dt
        rb += float(np.sum(np.where(on_c, dv * m[k], 0.0))) * dt
    rc = float(mu_star.values[:K][(~contact[:K]) & interior[None, :]].sum())
    value = objective_value(coeffs, grid, mu_star, m_star)
    tol = rtol * _scaled(value)
    return (
        CheckResult("mixed_a_contact", abs(ra), tol, bool(abs(ra) <= tol)),
        CheckResult("mixed_b_continuation", abs(rb), tol, bool(abs(rb) <= tol)),
        CheckResult("mixed_c_exit_mass", rc, exit_tol, bool(rc <= exit_tol)),
    )


def purified_policy(vf: ValueFunction, m_star: OccupationFlow, mu_star: ExitMeasure):
    """Pure-action policy built from a relaxed optimiser.

    Nodes the relaxed flow reaches keep their stopping fractions; the others
    stop on contact.  Everybody who continues plays the smallest action
    maximising ``f dt + E[v_next]`` on the action grid.
    """
    from .mfg import policy_from_measures
    from .oracle import _pure_policy

    K = m_star.values.shape[0]
    relaxed = policy_from_measures(mu_star, m_star)
    reached = (m_star.state_mass() + mu_star.values[:K]) > 0
    stop = np.where(reached, relaxed.stop, vf.contact[:K].astype(float))
    stop[:, 0] = stop[:, -1] = 1.0
    return _pure_policy(stop, vf.argmax_action, vf.a_count)


def check_strict_control(spec: ProblemSpec, grid: Grid, m_star: OccupationFlow, mu_star: ExitMeasure,
                         rtol: float = VALUE_RTOL) -> CheckResult:
    """Replace the relaxed control by a pure one and re-score in the same field."""
    if not spec.convex_k:
        return CheckResult("strict_control", 0.0, 0.0, True,
                           "skipped: problem does not declare convex K")
    coeffs, trans = _frozen(spec, grid, moment_of(m_star, mu_star, spec, grid))
    relaxed_value = objective_value(coeffs, grid, mu_star, m_star)
    vf = dp_from_coefficients(coeffs, grid, trans)
    pol = purified_policy(vf, m_star, mu_star)
    m, mu = kernels.push_forward(spec.initial_weights(grid), pol.stop, pol.ctrl,
                                 trans.p_stay, trans.p_up, trans.p_down)
    pure_value = objective_value(coeffs, grid, ExitMeasure(mu), OccupationFlow(m))
    shortfall = relaxed_value - pure_value
    tol = rtol * _scaled(relaxed_value)
    return CheckResult("strict_control", max(shortfall, 0.0), tol, bool(shortfall <= tol),
                       f"relaxed {relaxed_value!r}, pure {pure_value!r}")


def check_exploitability(spec: ProblemSpec, grid: Grid, mu: ExitMeasure, m: OccupationFlow,
                         tol: float = 1e-5) -> CheckResult:
    from .mfg import InfeasibleCandidateError, exploitability

    try:
        e = exploitability(spec, grid, mu, m)
    except InfeasibleCandidateError as exc:
        return CheckResult("exploitability", float("inf"), tol, False, str(exc))
    return CheckResult("exploitability", e, tol, bool(e <= tol))


def certify(spec: ProblemSpec, grid: Grid, mu: ExitMeasure, m: OccupationFlow,
            equilibrium_tol: Optional[float] = None) -> CertificationReport:
    """Run every check on ``(mu, m)`` in the field frozen at its own moments.

    ``equilibrium_tol`` adds an exploitability check for mean-field output.
    """
    moments = moment_of(m, mu, spec, grid)
    coeffs, trans = _frozen(spec, grid, moments)
    prog = lpmod.build_from_coefficients(coeffs, grid, trans, spec.initial_weights(grid))
    vf = dp_from_coefficients(coeffs, grid, trans)
    checks = [check_constraint_residual(m, mu, prog),
              check_value_equivalence(spec, grid, moments),
              *check_mixed_solution(spec, grid, vf, m, mu),
              check_strict_control(spec, grid, m, mu)]
    if equilibrium_tol is not None:
        checks.append(check_exploitability(spec, grid, mu, m, equilibrium_tol))
    notes = []
    lateral = np.abs(coeffs.g[1:grid.K][:, ~grid.interior]) if grid.K > 1 else np.zeros(0)
    if lateral.size and lateral.max() > 0.0:
        notes.append(f"obstacle is nonzero on the lateral boundary (max |g| {lateral.max():.3g}); "
                     "the checks certify the discrete chain, continuum PDE statements do not apply")
    return CertificationReport(checks, notes)
