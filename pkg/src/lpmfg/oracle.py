"""Backward induction on the chain: the discrete obstacle problem.

This is an independent route to the optimal value: the LP optimises over
measures, this module over value functions.  On the same chain the two
must agree to solver precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .chain import TransitionModel
from .domain import Coefficients, Grid, MomentVector, ProblemSpec, sample_coefficients


@dataclass(frozen=True)
class ValueFunction:
    v: np.ndarray
    g: np.ndarray
    contact: np.ndarray
    argmax_action: np.ndarray
    continuation: np.ndarray
    a_count: int


@dataclass(frozen=True)
class FeedbackPolicy:
    """Randomised Markov policy on the chain.

    ``stop[k, i]`` is the probability of stopping on arrival at ``(k, i)``
    for ``k < K`` (everybody left exits at ``T``); ``ctrl[k, i, :]`` is the
    action distribution of those who continue.
    """

    stop: np.ndarray
    ctrl: np.ndarray


def dp_from_coefficients(coeffs: Coefficients, grid: Grid, trans: TransitionModel,
                         contact_rtol: float = 1e-8) -> ValueFunction:
    v, best, cont = kernels.dp_backward(
        trans.p_stay, trans.p_up, trans.p_down, coeffs.f, coeffs.g, grid.dt
    )
    contact = (v - coeffs.g) <= contact_rtol * (1.0 + np.abs(v))
    return ValueFunction(v=v, g=coeffs.g, contact=contact, argmax_action=best, continuation=cont,
                         a_count=grid.a_count)


def dp_solve(spec: ProblemSpec, grid: Grid, trans: TransitionModel, moments: MomentVector,
             contact_rtol: float = 1e-8) -> ValueFunction:
    coeffs = sample_coefficients(spec, grid, moments)
    return dp_from_coefficients(coeffs, grid, trans, contact_rtol)


def dp_value_at_zero(vf: ValueFunction, spec: ProblemSpec, grid: Optional[Grid] = None,
                     m0: Optional[np.ndarray] = None) -> float:
    if m0 is None:
        if grid is None:
            raise ValueError("need the grid (or explicit m0) to weight v(0, .)")
        m0 = spec.initial_weights(grid)
    return float(math.fsum(vf.v[0] * m0))


def feedback_policy(vf: ValueFunction) -> FeedbackPolicy:
    """Stop on first contact, otherwise play the smallest maximising action."""
    K, n = vf.argmax_action.shape
    stop = vf.contact[:K].astype(float)
    stop[:, 0] = stop[:, -1] = 1.0
    return _pure_policy(stop, vf.argmax_action, vf.a_count)


def _pure_policy(stop, action, na):
    K, n = action.shape
    ctrl = np.zeros((K, n, na))
    kk, ii = np.nonzero(action >= 0)
    ctrl[kk, ii, action[kk, ii]] = 1.0
    ctrl[action < 0] = 1.0 / na
    return FeedbackPolicy(stop=stop, ctrl=ctrl)

