"""Grids, problem specifications and discrete measures.

Conventions used throughout the package:

* ``K = t_count - 1`` time slices; slice ``k`` covers ``[t_k, t_k + dt)``.
* An occupation flow ``m`` has shape ``(K, x_count, a_count)`` and holds the
  mass alive during slice ``k`` at state node ``i`` using action ``j``.
* An exit measure ``mu`` has shape ``(K + 1, x_count)`` and holds the mass that
  leaves the game (stops or is absorbed) at time node ``k`` in state ``i``.
* The first and last state nodes are the boundary of the domain; mass never
  lives there, it is absorbed on arrival.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

BOUNDARY_MODES = ("attainable", "unattainable")


class ConfigError(ValueError):
    """Invalid problem, grid or run configuration."""


class ShapeError(ValueError):
    """Array shapes inconsistent with the grid."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid:
    T: float
    t_count: int
    x_nodes: np.ndarray
    a_nodes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_nodes", _frozen(self.x_nodes))
        object.__setattr__(self, "a_nodes", _frozen(self.a_nodes))
        if self.t_count < 2:
            raise ConfigError(f"t_count must be >= 2, got {self.t_count}")
        if not self.T > 0:
            raise ConfigError(f"horizon T must be positive, got {self.T}")
        x = self.x_nodes
        if x.ndim != 1 or x.size < 3:
            raise ConfigError("need at least 3 state nodes (two boundary, one interior)")
        steps = np.diff(x)
        if np.any(steps <= 0):
            raise ConfigError("x_nodes must be strictly increasing")
        if np.max(np.abs(steps - steps.mean())) > 1e-9 * max(1.0, abs(steps.mean())):
            raise ConfigError("x_nodes must be uniformly spaced")
        if self.a_nodes.ndim != 1 or self.a_nodes.size == 0:
            raise ConfigError("a_nodes must be a nonempty 1-d array")

    @classmethod
    def uniform(cls, T, x_lo, x_hi, t_count, x_count, a_nodes) -> "Grid":
        return cls(
            T=float(T),
            t_count=int(t_count),
            x_nodes=np.linspace(x_lo, x_hi, int(x_count)),
            a_nodes=np.atleast_1d(np.asarray(a_nodes, dtype=float)),
        )

    @property
    def K(self) -> int:
        return self.t_count - 1

    @property
    def dt(self) -> float:
        return self.T / self.K

    @property
    def dx(self) -> float:
        return float(self.x_nodes[1] - self.x_nodes[0])

    @property
    def x_count(self) -> int:
        return self.x_nodes.size

    @property
    def a_count(self) -> int:
        return self.a_nodes.size

    @property
    def t_nodes(self) -> np.ndarray:
        return np.arange(self.t_count) * self.dt

    @property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.x_count, dtype=bool)
        mask[0] = mask[-1] = False
        return mask


Evaluator = Callable[..., np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    """A mean-field stopping/control problem in separable moment form.

    Coefficients see the population only through moment vectors::

        b(t, x, m, a)  = barb(t, x, <hat_b(t, .), m_t>, a)
        s(t, x, m, a)  = barsigma(t, x, <hat_sigma(t, .), m_t>, a)
        f(t, x, m, a)  = barf(t, x, <hat_f(t, .), m_t>, a)
        g(t, x, mu)    = barg(t, x, <hat_g, mu>)

    Evaluators are called once per time slice with numpy arguments that
    broadcast: ``barb(t, x[:, None], z, a[None, :])`` with ``z`` of shape
    ``(d,)``; ``hat_b(t, x)`` must return shape ``x.shape + (d,)``.
    ``m0`` is either an unnormalised density callable on state nodes or an
    explicit weight vector over the full state grid.
    """

    name: str
    T: float
    x_lo: float
    x_hi: float
    a_lo: float
    a_hi: float
    barb: Evaluator
    barsigma: Evaluator
    barf: Evaluator
    barg: Evaluator
    m0: Union[Callable[[np.ndarray], np.ndarray], np.ndarray]
    d: int = 1
    hat_b: Optional[Evaluator] = None
    hat_sigma: Optional[Evaluator] = None
    hat_f: Optional[Evaluator] = None
    hat_g: Optional[Evaluator] = None
    boundary_mode: str = "attainable"
    convex_k: bool = False
    description: str = ""
    max_d: int = field(default=16, repr=False)

    def __post_init__(self):
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ConfigError(f"boundary_mode must be one of {BOUNDARY_MODES}")
        if not self.x_lo < self.x_hi:
            raise ConfigError("need x_lo < x_hi")
        if self.a_lo > self.a_hi:
            raise ConfigError("need a_lo <= a_hi")
        if not 1 <= self.d <= self.max_d:
            raise ConfigError(f"moment dimension d={self.d} outside [1, {self.max_d}]")

    def make_grid(self, t_count: int, x_count: int, a_count: int) -> Grid:
        if a_count < 1:
            raise ConfigError("a_count must be >= 1")
        if a_count == 1:
            actions = np.array([0.5 * (self.a_lo + self.a_hi)])
        else:
            actions = np.linspace(self.a_lo, self.a_hi, a_count)
        return Grid.uniform(self.T, self.x_lo, self.x_hi, t_count, x_count, actions)

    def initial_weights(self, grid: Grid) -> np.ndarray:
        """Initial law on the state grid; zero on the boundary, sums to one."""
        if callable(self.m0):
            w = np.asarray(self.m0(grid.x_nodes), dtype=float) * grid.interior
        else:
            w = np.asarray(self.m0, dtype=float)
            if w.shape != (grid.x_count,):
                raise ShapeError(f"m0 has shape {w.shape}, grid has {grid.x_count} nodes")
            if np.any(w[~grid.interior] != 0):
                raise ConfigError("m0 must put no weight on boundary nodes")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigError("m0 must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise ConfigError("m0 has no mass on interior nodes")
        return w / total

    def kernel(self, which: str, t: float, x: np.ndarray) -> np.ndarray:
        fn = getattr(self, "hat_" + which)
        if fn is None:
            return np.zeros(np.shape(x) + (self.d,))
        return np.broadcast_to(np.asarray(fn(t, x), dtype=float), np.shape(x) + (self.d,))


@dataclass(frozen=True)
class OccupationFlow:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 3:
            raise ShapeError("occupation flow must be indexed (k, i, j)")

    @classmethod
    def zeros(cls, grid: Grid) -> "OccupationFlow":
        return cls(np.zeros((grid.K, grid.x_count, grid.a_count)))

    def slice_mass(self) -> np.ndarray:
        return self.values.sum(axis=(1, 2))

    def state_mass(self) -> np.ndarray:
        return self.values.sum(axis=2)

    def check(self, grid: Optional[Grid] = None, tol: float = 1e-9) -> None:
        if grid is not None and self.values.shape != (grid.K, grid.x_count, grid.a_count):
            raise ShapeError(f"flow shape {self.values.shape} does not match grid")
        if np.any(self.values < 0):
            raise ValueError("occupation flow has negative entries")
        worst = self.slice_mass().max(initial=0.0)
        if worst > 1 + tol:
            raise ValueError(f"slice mass {worst!r} exceeds 1")


@dataclass(frozen=True)
class ExitMeasure:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 2:
            raise ShapeError("exit measure must be indexed (k, i)")

    def total(self) -> float:
        return float(self.values.sum())

    def check(self, grid: Optional[Grid] = None, tol: float = 1e-9) -> None:
        if grid is not None and self.values.shape != (grid.t_count, grid.x_count):
            raise ShapeError(f"exit measure shape {self.values.shape} does not match grid")
        if np.any(self.values < 0):
            raise ValueError("exit measure has negative entries")
        if abs(self.total() - 1.0) > tol:
            raise ValueError(f"exit measure has total mass {self.total()!r}")


@dataclass(frozen=True)
class MomentVector:
    """Moments ``<hat_h(t_k, .), m_k>`` per slice and ``<hat_g, mu>``."""

    z_b: np.ndarray
    z_sigma: np.ndarray
    z_f: np.ndarray
    w_g: np.ndarray

    def __post_init__(self):
        for name in ("z_b", "z_sigma", "z_f", "w_g"):
            arr = _frozen(getattr(self, name))
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"moment {name} has non-finite entries")
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls, grid: Grid, d: int) -> "MomentVector":
        z = np.zeros((grid.K, d))
        return cls(z, z, z, np.zeros(d))

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.z_b.ravel(), self.z_sigma.ravel(), self.z_f.ravel(), self.w_g.ravel()])

    def slice(self, k: int):
        return self.z_b[k], self.z_sigma[k], self.z_f[k]


@dataclass(frozen=True)
class ControlKernel:
    probs: np.ndarray
    mass: np.ndarray
    supported: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.probs * self.mass[..., None]


def _check_shapes(m: OccupationFlow, mu: ExitMeasure, grid: Grid) -> None:
    if m.values.shape != (grid.K, grid.x_count, grid.a_count):
        raise ShapeError(f"flow shape {m.values.shape} != {(grid.K, grid.x_count, grid.a_count)}")
    if mu.values.shape != (grid.t_count, grid.x_count):
        raise ShapeError(f"exit measure shape {mu.values.shape} != {(grid.t_count, grid.x_count)}")


def moment_of(m: OccupationFlow, mu: ExitMeasure, spec: ProblemSpec, grid: Grid) -> MomentVector:
    _check_shapes(m, mu, grid)
    state_mass = m.state_mass()
    x = grid.x_nodes
    t = grid.t_nodes
    z = {}
    for which in ("b", "sigma", "f"):
        z[which] = np.stack(
            [state_mass[k] @ spec.kernel(which, t[k], x) for k in range(grid.K)]
        ) if grid.K else np.zeros((0, spec.d))
    w = np.zeros(spec.d)
    for k in range(grid.t_count):
        w = w + mu.values[k] @ spec.kernel("g", t[k], x)
    return MomentVector(z["b"], z["sigma"], z["f"], w)


def disintegrate(m: OccupationFlow) -> ControlKernel:
    """Split ``m[k, i, :]`` into a state marginal and an action distribution.

    Rows without mass get the uniform action distribution and are flagged
    as unsupported.
    """
    vals = m.values
    mass = vals.sum(axis=2)
    supported = mass > 0
    na = vals.shape[2]
    probs = np.full(vals.shape, 1.0 / na)
    np.divide(vals, mass[..., None], out=probs, where=supported[..., None])
    return ControlKernel(probs=probs, mass=mass, supported=supported)


def mass_profile(m: OccupationFlow, mu: ExitMeasure) -> dict:
    """Map ``k -> (mass alive during slice k, mass exited up to time node k)``.

    At the final node nothing is alive by convention.
    """
    remaining = np.append(m.slice_mass(), 0.0)
    exited = np.cumsum(mu.values.sum(axis=1))
    return {k: (float(remaining[k]), float(exited[k])) for k in range(mu.values.shape[0])}


@dataclass(frozen=True)
class Coefficients:
    """Coefficients sampled on the grid at frozen moments.

    ``b, s2, f`` have shape ``(K, x_count, a_count)``; ``g`` has shape
    ``(t_count, x_count)``. ``s2`` is the squared volatility.
    """

    b: np.ndarray
    s2: np.ndarray
    f: np.ndarray
    g: np.ndarray


def sample_dynamics(spec: ProblemSpec, grid: Grid, k: int, z_b: np.ndarray, z_sigma: np.ndarray):
    """Drift and squared volatility ``(n, na)`` on slice ``k``."""
    n, na = grid.x_count, grid.a_count
    x = grid.x_nodes[:, None]
    a = grid.a_nodes[None, :]
    t = grid.t_nodes[k]
    b = np.array(np.broadcast_to(spec.barb(t, x, z_b, a), (n, na)), dtype=float)
    s = np.array(np.broadcast_to(spec.barsigma(t, x, z_sigma, a), (n, na)), dtype=float)
    if not (np.all(np.isfinite(b)) and np.all(np.isfinite(s))):
        raise ConfigError("barb/barsigma not finite on the grid")
    if np.any(s < 0):
        raise ConfigError("barsigma must be nonnegative")
    return b, s * s


def sample_coefficients(spec: ProblemSpec, grid: Grid, moments: MomentVector) -> Coefficients:
    K, n, na = grid.K, grid.x_count, grid.a_count
    if moments.z_b.shape != (K, spec.d) or moments.w_g.shape != (spec.d,):
        raise ShapeError("moment vector does not match grid/problem dimension")
    x = grid.x_nodes[:, None]
    a = grid.a_nodes[None, :]
    t = grid.t_nodes
    b = np.empty((K, n, na))
    s = np.empty((K, n, na))
    f = np.empty((K, n, na))
    for k in range(K):
        zb, zs, zf = moments.slice(k)
        b[k] = np.broadcast_to(spec.barb(t[k], x, zb, a), (n, na))
        s[k] = np.broadcast_to(spec.barsigma(t[k], x, zs, a), (n, na))
        f[k] = np.broadcast_to(spec.barf(t[k], x, zf, a), (n, na))
    g = np.empty((K + 1, n))
    for k in range(K + 1):
        g[k] = np.broadcast_to(spec.barg(t[k], grid.x_nodes, moments.w_g), (n,))
    for name, arr in (("barb", b), ("barsigma", s), ("barf", f), ("barg", g)):
        if not np.all(np.isfinite(arr)):
            raise ConfigError(f"{name} is not finite on the grid")
    if np.any(s < 0):
        raise ConfigError("barsigma must be nonnegative")
    if spec.boundary_mode == "attainable" and np.any(s[:, grid.interior, :] <= 0):
        raise ConfigError("attainable boundary mode needs barsigma bounded away from zero")
    return Coefficients(b=b, s2=s * s, f=f, g=g)


def objective_value(coeffs: Coefficients, grid: Grid, mu: ExitMeasure, m: OccupationFlow) -> float:
    """Reward of ``(mu, m)`` with coefficients frozen in ``coeffs``."""
    running = float(np.sum(coeffs.f * m.values)) * grid.dt
    return running + float(np.sum(coeffs.g * mu.values))
