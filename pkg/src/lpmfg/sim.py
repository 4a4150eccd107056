"""N-player Monte Carlo under a fixed feedback policy.

Agents are independent given the (precomputed) transitions: they interact
only through the frozen mean field.  Every random draw comes from a
counter-based hash of ``(seed, agent, step, stream)``, so results do not
depend on the backend or on how agents are batched.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np

from . import kernels
from .chain import TransitionModel
from .domain import Coefficients, ExitMeasure, Grid, OccupationFlow, ProblemSpec, ShapeError
from .oracle import FeedbackPolicy


@dataclass(frozen=True)
class PopulationRun:
    n_agents: int
    seed: int
    empirical_m: OccupationFlow
    empirical_mu: ExitMeasure
    payoff_mean: float
    payoff_se: float


def simulate_population(spec: ProblemSpec, grid: Grid, trans: TransitionModel, policy: FeedbackPolicy,
                        n_agents: int, seed: int, coeffs: Coefficients) -> PopulationRun:
    """Simulate ``n_agents`` players and collect empirical measures and payoffs.

    ``coeffs`` must be the coefficients ``trans`` was built from; they score
    each agent's path.
    """
    K, n, na = grid.K, grid.x_count, grid.a_count
    if policy.stop.shape != (K, n) or policy.ctrl.shape != (K, n, na):
        raise ShapeError("policy does not match the grid")
    if n_agents < 1:
        raise ValueError("need at least one agent")
    m0 = spec.initial_weights(grid)
    m_counts, mu_counts, payoff = kernels.simulate(
        np.uint64(seed), int(n_agents), m0, np.ascontiguousarray(policy.stop, dtype=float),
        np.ascontiguousarray(policy.ctrl, dtype=float), trans.p_stay, trans.p_up, trans.p_down,
        coeffs.f, coeffs.g, grid.dt,
    )
    mean = float(np.sum(payoff)) / n_agents
    se = float(np.std(payoff, ddof=1)) / math.sqrt(n_agents) if n_agents > 1 else float("nan")
    return PopulationRun(
        n_agents=int(n_agents), seed=int(seed),
        empirical_m=OccupationFlow(m_counts / n_agents),
        empirical_mu=ExitMeasure(mu_counts / n_agents),
        payoff_mean=mean, payoff_se=se,
    )


def chaos_distance(run: PopulationRun, m_star: OccupationFlow, mu_star: ExitMeasure) -> float:
    """``(|m_N - m*|_1 + |mu_N - mu*|_1) / 2``.

    Each measure has total mass at most one, so the result lies in [0, 2]
    and equals 1 for disjoint point masses in both tensors.
    """
    if run.empirical_m.values.shape != m_star.values.shape or \
            run.empirical_mu.values.shape != mu_star.values.shape:
        raise ShapeError("empirical and mean-field measures differ in shape")
    dm = np.abs(run.empirical_m.values - m_star.values).sum()
    dmu = np.abs(run.empirical_mu.values - mu_star.values).sum()
    return float(dm + dmu) / 2.0


@dataclass(frozen=True)
class SweepRow:
    n_agents: int
    seeds: int
    median_distance: float
    mean_distance: float
    mean_payoff: float


def chaos_sweep(spec: ProblemSpec, grid: Grid, trans: TransitionModel, policy: FeedbackPolicy,
                coeffs: Coefficients, m_star: OccupationFlow, mu_star: ExitMeasure,
                sizes: Sequence[int], seeds: Iterable[int]) -> List[SweepRow]:
    seeds = list(seeds)
    rows = []
    for n_agents in sizes:
        dists, pays = [], []
        for s in seeds:
            run = simulate_population(spec, grid, trans, policy, n_agents, s, coeffs)
            dists.append(chaos_distance(run, m_star, mu_star))
            pays.append(run.payoff_mean)
        rows.append(SweepRow(int(n_agents), len(seeds), float(np.median(dists)),
                             float(np.mean(dists)), float(np.mean(pays))))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_agents", "seeds", "median_distance", "mean_distance", "mean_payoff"])
        for r in rows:
            w.writerow([r.n_agents, r.seeds, repr(r.median_distance), repr(r.mean_distance),
                        repr(r.mean_payoff)])
