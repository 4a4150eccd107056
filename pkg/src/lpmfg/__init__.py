"""Linear-programming solver for mean-field games of optimal stopping and control.

Agents follow a controlled diffusion on an interval and may stop at any
time.  The game is discretised by an upwind Markov chain, and each agent's
problem becomes a linear program over occupation and exit measures.  The
package solves those programs, checks them against backward induction,
searches for mean-field equilibria by damped best-response iteration, and
simulates finite populations.
"""
from .domain import (ConfigError, ExitMeasure, Grid, MomentVector, OccupationFlow, ProblemSpec,
                     ShapeError)
from .kernels import BACKEND
from .registry import get_problem, registry_problems

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfigError", "ExitMeasure", "Grid", "MomentVector", "OccupationFlow",
    "ProblemSpec", "ShapeError", "get_problem", "registry_problems", "__version__",
]
