"""Upwind Markov-chain approximation of the controlled diffusion.

From interior node ``i`` under action ``j`` during slice ``k`` the chain moves
to ``i + 1`` with probability ``dt * (s2 / (2 dx^2) + b+ / dx)``, to ``i - 1``
with ``dt * (s2 / (2 dx^2) + b- / dx)`` and stays otherwise.  Boundary nodes
have no outgoing transitions: arriving there means leaving the game.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .domain import Coefficients, ConfigError, Grid, MomentVector, ProblemSpec, sample_coefficients


@dataclass(frozen=True)
class TransitionModel:
    p_stay: np.ndarray
    p_up: np.ndarray
    p_down: np.ndarray
    boundary: np.ndarray

    def row_sums(self) -> np.ndarray:
        return self.p_stay + self.p_up + self.p_down

    def expectation(self, h_next: np.ndarray, k: int) -> np.ndarray:
        """``E[h(X_{k+1}) | X_k = x_i, a_j]`` on interior nodes, shape ``(n, na)``.

        Boundary rows are zero.
        """
        out = self.p_stay[k] * h_next[:, None]
        out[:-1] += self.p_up[k, :-1] * h_next[1:, None]
        out[1:] += self.p_down[k, 1:] * h_next[:-1, None]
        out[self.boundary] = 0.0
        return out


@dataclass(frozen=True)
class CFLReport:
    passed: bool
    lhs: float
    margin: float
    worst: Optional[Tuple[int, int, int]]


def _lhs(coeffs: Coefficients, grid: Grid) -> np.ndarray:
    dx = grid.dx
    lhs = grid.dt * (coeffs.s2 / dx**2 + np.abs(coeffs.b) / dx)
    lhs[:, ~grid.interior, :] = 0.0
    return lhs


def cfl_check(spec: ProblemSpec, grid: Grid, moments: MomentVector,
              coeffs: Optional[Coefficients] = None) -> CFLReport:
    """Nonnegativity of the stay probability on every interior row.

    The left-hand side is ``dt * (s2 / dx^2 + |b| / dx)`` maximised over
    interior ``(k, i, j)``; the scheme is valid iff it is at most one.
    """
    if coeffs is None:
        coeffs = sample_coefficients(spec, grid, moments)
    lhs = _lhs(coeffs, grid)
    if lhs.size == 0:
        return CFLReport(True, 0.0, 1.0, None)
    worst = np.unravel_index(int(np.argmax(lhs)), lhs.shape)
    top = float(lhs[worst])
    return CFLReport(top <= 1.0 + 1e-12, top, 1.0 - top, tuple(int(w) for w in worst))


def upwind_probabilities(b, s2, dt, dx):
    """``(p_stay, p_up, p_down)`` for drift ``b`` and variance ``s2``."""
    diff = s2 / (2.0 * dx * dx)
    p_up = dt * (diff + np.maximum(b, 0.0) / dx)
    p_down = dt * (diff + np.maximum(-b, 0.0) / dx)
    # clip the 1e-12 slack tolerated by the CFL test
    p_stay = np.maximum(1.0 - p_up - p_down, 0.0)
    return p_stay, p_up, p_down


def transitions_from_coefficients(coeffs: Coefficients, grid: Grid,
                                  boundary_mode: str = "attainable") -> TransitionModel:
    lhs = _lhs(coeffs, grid)
    if lhs.size and lhs.max() > 1.0 + 1e-12:
        k, i, j = np.unravel_index(int(np.argmax(lhs)), lhs.shape)
        raise ConfigError(
            f"CFL violated at (k={k}, i={i}, j={j}): dt*(s2/dx^2+|b|/dx) = {lhs[k, i, j]:.6g} > 1"
        )
    p_stay, p_up, p_down = upwind_probabilities(coeffs.b, coeffs.s2, grid.dt, grid.dx)
    boundary = ~grid.interior
    for arr in (p_up, p_down, p_stay):
        arr[:, boundary, :] = 0.0
    if boundary_mode == "unattainable":
        into = np.concatenate([p_down[:, 1, :].ravel(), p_up[:, -2, :].ravel()])
        if np.any(into > 0):
            raise ConfigError("unattainable boundary mode, but the chain reaches the boundary")
    return TransitionModel(p_stay=p_stay, p_up=p_up, p_down=p_down, boundary=boundary)


def assemble_transition(spec: ProblemSpec, grid: Grid, moments: MomentVector) -> TransitionModel:
    coeffs = sample_coefficients(spec, grid, moments)
    return transitions_from_coefficients(coeffs, grid, spec.boundary_mode)
