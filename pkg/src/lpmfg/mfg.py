"""Mean-field equilibria: best response, exploitability, damped fixed point.

A candidate ``(mu, m)`` freezes the moments the coefficients read.  The best
response solves the occupation LP in that frozen field; the candidate is an
equilibrium when it is feasible in its own field and no feasible pair does
better there.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import lp as lpmod
from .chain import TransitionModel, transitions_from_coefficients, upwind_probabilities
from .domain import (Coefficients, ConfigError, ExitMeasure, Grid, MomentVector, OccupationFlow,
                     ProblemSpec, disintegrate, moment_of, objective_value, sample_coefficients,
                     sample_dynamics)
from .kernels import advance_np
from .oracle import FeedbackPolicy

log = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-8


class InfeasibleCandidateError(ValueError):
    def __init__(self, residual: float):
        super().__init__(f"candidate violates its own flow constraints (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class FrozenField:
    """Everything derived from a frozen candidate ``(mu_bar, m_bar)``."""

    moments: MomentVector
    coeffs: Coefficients
    trans: TransitionModel
    lp: lpmod.LinearProgram


def freeze(spec: ProblemSpec, grid: Grid, mu_bar: ExitMeasure, m_bar: OccupationFlow) -> FrozenField:
    moments = moment_of(m_bar, mu_bar, spec, grid)
    coeffs = sample_coefficients(spec, grid, moments)
    trans = transitions_from_coefficients(coeffs, grid, spec.boundary_mode)
    lp = lpmod.build_from_coefficients(coeffs, grid, trans, spec.initial_weights(grid))
    return FrozenField(moments, coeffs, trans, lp)


def gamma(spec: ProblemSpec, grid: Grid, mu_bar: ExitMeasure, m_bar: OccupationFlow,
          mu: ExitMeasure, m: OccupationFlow) -> float:
    """Reward of ``(mu, m)`` facing the frozen field ``(mu_bar, m_bar)``."""
    coeffs = sample_coefficients(spec, grid, moment_of(m_bar, mu_bar, spec, grid))
    return objective_value(coeffs, grid, mu, m)


def feasibility_residual(field_: FrozenField, mu: ExitMeasure, m: OccupationFlow) -> float:
    v, stray = lpmod.measures_to_vector(field_.lp, mu, m)
    return max(lpmod.residual(field_.lp, v), stray)


def _solve_frozen(field_: FrozenField, grid: Grid, lp_tol: float):
    sol = lpmod.solve_lp(field_.lp, tol=lp_tol)
    mu, m = lpmod.extract_measures(field_.lp, sol, grid)
    return mu, m, sol.value


def best_response(spec: ProblemSpec, grid: Grid, mu_bar: ExitMeasure, m_bar: OccupationFlow,
                  lp_tol: float = 1e-9) -> Tuple[ExitMeasure, OccupationFlow, float]:
    """One optimiser of the occupation LP in the field frozen at ``(mu_bar, m_bar)``."""
    return _solve_frozen(freeze(spec, grid, mu_bar, m_bar), grid, lp_tol)


def exploitability(spec: ProblemSpec, grid: Grid, mu: ExitMeasure, m: OccupationFlow,
                   lp_tol: float = 1e-9) -> float:
    field_ = freeze(spec, grid, mu, m)
    res = feasibility_residual(field_, mu, m)
    if res > FEASIBILITY_TOL:
        raise InfeasibleCandidateError(res)
    _, _, br_value = _solve_frozen(field_, grid, lp_tol)
    return br_value - objective_value(field_.coeffs, grid, mu, m)


# ---------------------------------------------------------------- policies and flows


def policy_from_measures(mu: ExitMeasure, m: OccupationFlow) -> FeedbackPolicy:
    """Stopping probabilities and action kernel that generate ``(mu, m)``.

    Nodes the pair never reaches get "stop" and uniform actions.
    """
    K = m.values.shape[0]
    alive = m.state_mass()
    arrivals = alive + mu.values[:K]
    stop = np.ones_like(arrivals)
    np.divide(mu.values[:K], arrivals, out=stop, where=arrivals > 0)
    stop[:, 0] = stop[:, -1] = 1.0
    return FeedbackPolicy(stop=np.clip(stop, 0.0, 1.0), ctrl=disintegrate(m).probs)


def propagate(spec: ProblemSpec, grid: Grid, policy: FeedbackPolicy) -> Tuple[ExitMeasure, OccupationFlow]:
    """Flow of a feedback policy in the field it generates itself.

    Slice ``k`` dynamics read the moments of ``m[k]``, which only depends on
    arrivals at ``k``, so a single forward sweep is exact.
    """
    K, n, na = grid.K, grid.x_count, grid.a_count
    x = grid.x_nodes
    t = grid.t_nodes
    m = np.zeros((K, n, na))
    mu = np.zeros((K + 1, n))
    arr = spec.initial_weights(grid)
    interior = grid.interior
    for k in range(K):
        mu[k] = np.where(interior, arr * policy.stop[k], arr)
        m[k] = (arr - mu[k])[:, None] * policy.ctrl[k]
        mass = m[k].sum(axis=1)
        b, s2 = sample_dynamics(spec, grid, k, mass @ spec.kernel("b", t[k], x),
                                mass @ spec.kernel("sigma", t[k], x))
        lhs = grid.dt * (s2 / grid.dx**2 + np.abs(b) / grid.dx)
        if np.any(lhs[interior] > 1.0 + 1e-12):
            raise ConfigError(f"CFL violated on slice {k} while propagating a policy")
        ps, pu, pd = upwind_probabilities(b, s2, grid.dt, grid.dx)
        ps[~interior] = pu[~interior] = pd[~interior] = 0.0
        arr = advance_np(m[k], ps, pu, pd)
    mu[K] = arr
    return ExitMeasure(mu), OccupationFlow(m)


def stop_now_pair(spec: ProblemSpec, grid: Grid) -> Tuple[ExitMeasure, OccupationFlow]:
    mu = np.zeros((grid.t_count, grid.x_count))
    mu[0] = spec.initial_weights(grid)
    return ExitMeasure(mu), OccupationFlow.zeros(grid)


def random_feasible_pair(spec: ProblemSpec, grid: Grid, rng: np.random.Generator,
                         max_stop: float = 0.3) -> Tuple[ExitMeasure, OccupationFlow]:
    """Flow of a random randomised policy, consistent with its own field."""
    K, n, na = grid.K, grid.x_count, grid.a_count
    stop = rng.uniform(0.0, max_stop, size=(K, n))
    ctrl = rng.dirichlet(np.ones(na), size=(K, n))
    return propagate(spec, grid, FeedbackPolicy(stop=stop, ctrl=ctrl))


def distance(spec: ProblemSpec, grid: Grid, a: Tuple[ExitMeasure, OccupationFlow],
             b: Tuple[ExitMeasure, OccupationFlow]) -> float:
    """L1 distance of the moment vectors plus L1 distance of the exit measures."""
    za = moment_of(a[1], a[0], spec, grid).stacked()
    zb = moment_of(b[1], b[0], spec, grid).stacked()
    return float(np.abs(za - zb).sum() + np.abs(a[0].values - b[0].values).sum())


# ---------------------------------------------------------------- fixed point


@dataclass
class IterationRecord:
    iter: int
    exploitability: float
    br_value: float
    nash_value: float
    distance: float
    damping: float
    residual: float = 0.0
    projected: bool = False


@dataclass
class EquilibriumResult:
    mu_star: ExitMeasure
    m_star: OccupationFlow
    nash_value: float
    exploitability: float
    trace: List[IterationRecord]
    converged: bool
    iterations: int
    nash_spread: float = 0.0
    starts: list = field(default_factory=list)

    def write_trace(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "exploitability", "br_value", "nash_value", "distance", "lambda"])
            for r in self.trace:
                w.writerow([r.iter, repr(r.exploitability), repr(r.br_value), repr(r.nash_value),
                            repr(r.distance), repr(r.damping)])


def fixed_point_solve(spec: ProblemSpec, grid: Grid, damping: float = 0.5, tol: float = 1e-6,
                      max_iter: int = 200, init: Optional[Tuple[ExitMeasure, OccupationFlow]] = None,
                      lp_tol: float = 1e-9, patience: int = 5,
                      callback: Optional[Callable[[int, ExitMeasure, OccupationFlow], None]] = None
                      ) -> EquilibriumResult:
    """Damped best-response iteration.

    ``x <- (1 - lam) x + lam BR(x)``.  ``lam`` is halved whenever the
    exploitability has gone ``patience`` iterations without improving its
    running minimum by one percent; this catches runs of increases as well
    as two-cycles between best-response vertices.  Iterates whose
    flow no longer matches their own field (coefficients that read the
    measure) are re-propagated under their own policy.  The best iterate by
    exploitability is returned.  ``callback(it, mu, m)`` sees every iterate
    after re-projection.
    """
    if not 0.0 < damping <= 1.0:
        raise ConfigError(f"damping must lie in (0, 1], got {damping}")
    if tol <= 0:
        raise ConfigError("tol must be positive")
    lam = float(damping)
    if init is None:
        mu0, m0_ = stop_now_pair(spec, grid)
        mu, m, _ = best_response(spec, grid, mu0, m0_, lp_tol)
    else:
        mu, m = init
    trace: List[IterationRecord] = []
    best = None
    stall = 0
    mark = np.inf
    moved = np.nan
    stop_next = False
    converged = False
    for it in range(1, max_iter + 1):
        field_ = freeze(spec, grid, mu, m)
        res = feasibility_residual(field_, mu, m)
        projected = False
        if res > FEASIBILITY_TOL:
            mu, m = propagate(spec, grid, policy_from_measures(mu, m))
            field_ = freeze(spec, grid, mu, m)
            res = feasibility_residual(field_, mu, m)
            projected = True
        mu.check(grid, tol=1e-9)
        m.check(grid, tol=1e-9)
        if callback is not None:
            callback(it, mu, m)
        br_mu, br_m, br_value = _solve_frozen(field_, grid, lp_tol)
        own = objective_value(field_.coeffs, grid, mu, m)
        expl = br_value - own
        trace.append(IterationRecord(it, expl, br_value, own, moved, lam, res, projected))
        if best is None or expl < best[2]:
            best = (mu, m, expl, own)
        if expl < 0.99 * mark:
            mark = expl
            stall = 0
        else:
            stall += 1
        log.debug("iter %d exploitability %.3e value %.6f lambda %.3g", it, expl, own, lam)
        if expl <= tol:
            converged = True
            break
        if stop_next:
            break
        if stall >= patience:
            lam *= 0.5
            stall = 0
        new = (ExitMeasure((1 - lam) * mu.values + lam * br_mu.values),
               OccupationFlow((1 - lam) * m.values + lam * br_m.values))
        moved = distance(spec, grid, (mu, m), new)
        mu, m = new
        if moved <= tol:
            stop_next = True
    mu_s, m_s, expl_s, own_s = best
    return EquilibriumResult(mu_star=mu_s, m_star=m_s, nash_value=own_s, exploitability=expl_s,
                             trace=trace, converged=converged, iterations=len(trace))


def multi_start_select(spec: ProblemSpec, grid: Grid, n_starts: int = 3, seed: int = 42,
                       damping: float = 0.5, tol: float = 1e-6, max_iter: int = 200,
                       lp_tol: float = 1e-9) -> EquilibriumResult:
    """Run the fixed point from several starts and keep the largest Nash value.

    Start 0 is the default initialisation; the others are flows of random
    policies drawn from ``default_rng([seed, s])``.
    """
    if n_starts < 1:
        raise ConfigError("n_starts must be >= 1")
    runs = []
    for s in range(n_starts):
        init = None if s == 0 else random_feasible_pair(spec, grid, np.random.default_rng([seed, s]))
        runs.append(fixed_point_solve(spec, grid, damping=damping, tol=tol, max_iter=max_iter,
                                      init=init, lp_tol=lp_tol))
    summary = [{"start": s, "converged": r.converged, "nash_value": r.nash_value,
                "exploitability": r.exploitability, "iterations": r.iterations}
               for s, r in enumerate(runs)]
    ok = [r for r in runs if r.converged]
    if not ok:
        log.warning("no start converged: %s", summary)
        chosen = min(runs, key=lambda r: r.exploitability)
        chosen.starts = summary
        return chosen
    values = [r.nash_value for r in ok]
    chosen = ok[int(np.argmax(values))]
    chosen.nash_spread = float(max(values) - min(values))
    chosen.starts = summary
    return chosen
