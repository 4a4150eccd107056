"""Tabulated problem files: coefficients sampled on a fixed grid.

Coefficients must be affine in the moments, so each grid value is stored
as ``c0 + c . z``.  Layout (whitespace separated, ``#`` starts a comment)::

    LPMFG-TABLE d t_count x_count a_count T x_lo x_hi boundary_mode convex_k
    A  a_0 ... a_{na-1}
    M  w_0 ... w_{n-1}                        initial law (renormalised on use)
    C  b|sigma|f  k i j  c0 c_1 ... c_d       one row per (k < K, i, j)
    G  k i  c0 c_1 ... c_d                    one row per (k <= K, i)
    H  b|sigma|f|g  k i  h_1 ... h_d          kernels, one row per (k, i)

A leading ``# name`` comment names the problem.  ``H`` rows are optional; a missing kernel is zero.  For ``b``, ``sigma``
and ``f`` the kernel rows run over ``k < K``; for ``g`` over ``k <= K``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, TextIO, Union

import numpy as np

from .domain import ConfigError, Grid, ProblemSpec

MAGIC = "LPMFG-TABLE"
_DYN = ("b", "sigma", "f")


@dataclass(frozen=True)
class TabulatedProblem(ProblemSpec):
    """A :class:`ProblemSpec` that only lives on the grid it was sampled on."""

    table_grid: Optional[Grid] = None
    tables: Optional[dict] = field(default=None, repr=False, compare=False)

    def make_grid(self, t_count: int, x_count: int, a_count: int) -> Grid:
        g = self.table_grid
        if (t_count, x_count, a_count) != (g.t_count, g.x_count, g.a_count):
            raise ConfigError(
                f"tabulated problem is sampled on a {g.t_count},{g.x_count},{g.a_count} grid; "
                f"got {t_count},{x_count},{a_count}"
            )
        return g


def _slice_index(grid: Grid, t: float) -> int:
    return int(np.argmin(np.abs(grid.t_nodes - t)))


def _affine_dyn(grid: Grid, table: np.ndarray):
    # table: (K, n, na, 1 + d)
    def ev(t, x, z, a):
        c = table[_slice_index(grid, t)]
        return c[..., 0] + c[..., 1:] @ np.asarray(z, dtype=float)
    return ev


def _affine_g(grid: Grid, table: np.ndarray):
    # table: (K + 1, n, 1 + d)
    def ev(t, x, w):
        c = table[_slice_index(grid, t)]
        return c[:, 0] + c[:, 1:] @ np.asarray(w, dtype=float)
    return ev


def _kernel(grid: Grid, table: np.ndarray):
    def ev(t, x):
        return table[_slice_index(grid, t)]
    return ev


def build_tabulated(name: str, grid: Grid, d: int, m0: np.ndarray, dyn: Dict[str, np.ndarray],
                    g: np.ndarray, kernels: Dict[str, np.ndarray], boundary_mode: str = "attainable",
                    convex_k: bool = False) -> TabulatedProblem:
    hats = {f"hat_{w}": _kernel(grid, kernels[w]) if w in kernels else None
            for w in ("b", "sigma", "f", "g")}
    a = grid.a_nodes
    return TabulatedProblem(
        name=name, T=float(grid.t_nodes[-1]), x_lo=float(grid.x_nodes[0]),
        x_hi=float(grid.x_nodes[-1]), a_lo=float(a.min()), a_hi=float(a.max()),
        barb=_affine_dyn(grid, dyn["b"]), barsigma=_affine_dyn(grid, dyn["sigma"]),
        barf=_affine_dyn(grid, dyn["f"]), barg=_affine_g(grid, g), m0=np.asarray(m0, dtype=float),
        d=d, boundary_mode=boundary_mode, convex_k=convex_k, table_grid=grid,
        tables={"dyn": dyn, "g": g, "kernels": kernels}, description="tabulated coefficients", **hats,
    )


def tabulate(spec: ProblemSpec, grid: Grid) -> TabulatedProblem:
    """Sample ``spec`` on ``grid``.

    Affinity in the moments is assumed: the slope is read off unit moment
    vectors, which is exact only for affine coefficients.
    """
    K, n, na, d = grid.K, grid.x_count, grid.a_count, spec.d
    x = grid.x_nodes
    t = grid.t_nodes
    a = grid.a_nodes
    zero = np.zeros(d)
    eye = np.eye(d)
    dyn = {}
    for w, fn in (("b", spec.barb), ("sigma", spec.barsigma), ("f", spec.barf)):
        tab = np.empty((K, n, na, 1 + d))
        for k in range(K):
            c0 = np.broadcast_to(fn(t[k], x[:, None], zero, a[None, :]), (n, na))
            tab[k, :, :, 0] = c0
            for l in range(d):
                tab[k, :, :, 1 + l] = np.broadcast_to(fn(t[k], x[:, None], eye[l], a[None, :]), (n, na)) - c0
        dyn[w] = tab
    g = np.empty((K + 1, n, 1 + d))
    for k in range(K + 1):
        c0 = np.broadcast_to(spec.barg(t[k], x, zero), (n,))
        g[k, :, 0] = c0
        for l in range(d):
            g[k, :, 1 + l] = np.broadcast_to(spec.barg(t[k], x, eye[l]), (n,)) - c0
    kernels = {}
    for w in ("b", "sigma", "f", "g"):
        if getattr(spec, "hat_" + w) is not None:
            steps = K + 1 if w == "g" else K
            kernels[w] = np.stack([spec.kernel(w, t[k], x) for k in range(steps)])
    return build_tabulated(spec.name, grid, d, spec.initial_weights(grid), dyn, g, kernels,
                           spec.boundary_mode, spec.convex_k)


def _num(v: float) -> str:
    return repr(float(v))


def write_table(tp: ProblemSpec, out: Union[str, TextIO], grid: Optional[Grid] = None) -> None:
    """Write a tabulated problem; any other spec is sampled on ``grid`` first."""
    if not isinstance(tp, TabulatedProblem):
        if grid is None:
            raise ConfigError("need a grid to tabulate a non-tabulated problem")
        tp = tabulate(tp, grid)
    grid = tp.table_grid
    K, n, na, d = grid.K, grid.x_count, grid.a_count, tp.d
    dyn, g, kernels = tp.tables["dyn"], tp.tables["g"], tp.tables["kernels"]
    lines = [f"# {tp.name}",
             " ".join([MAGIC, str(d), str(grid.t_count), str(n), str(na), _num(tp.T), _num(tp.x_lo),
                       _num(tp.x_hi), tp.boundary_mode, str(int(tp.convex_k))]),
             "A " + " ".join(_num(v) for v in grid.a_nodes),
             "M " + " ".join(_num(v) for v in np.asarray(tp.m0, dtype=float))]
    for w in _DYN:
        for k in range(K):
            for i in range(n):
                for j in range(na):
                    lines.append(f"C {w} {k} {i} {j} " + " ".join(_num(v) for v in dyn[w][k, i, j]))
    for k in range(K + 1):
        for i in range(n):
            lines.append(f"G {k} {i} " + " ".join(_num(v) for v in g[k, i]))
    for w in ("b", "sigma", "f", "g"):
        if w not in kernels:
            continue
        for k in range(kernels[w].shape[0]):
            for i in range(n):
                lines.append(f"H {w} {k} {i} " + " ".join(_num(v) for v in kernels[w][k, i]))
    text = "\n".join(lines) + "\n"
    if isinstance(out, str):
        with open(out, "w") as fh:
            fh.write(text)
    else:
        out.write(text)


def read_table(src: Union[str, TextIO], name: Optional[str] = None) -> TabulatedProblem:
    if isinstance(src, str):
        with open(src) as fh:
            text = fh.read()
    else:
        text = src.read()
    first = text.lstrip().splitlines()[0] if text.strip() else ""
    if name is None:
        name = first[1:].strip() if first.startswith("#") else (src if isinstance(src, str) else "table")
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows or rows[0][1][0] != MAGIC:
        raise ConfigError(f"not a tabulated problem file (expected a {MAGIC} header)")
    head = rows[0][1]
    if len(head) != 10:
        raise ConfigError("header must be: LPMFG-TABLE d t_count x_count a_count T x_lo x_hi "
                          "boundary_mode convex_k")
    try:
        d, t_count, n, na = (int(v) for v in head[1:5])
        T, x_lo, x_hi = (float(v) for v in head[5:8])
        boundary_mode, convex_k = head[8], bool(int(head[9]))
    except ValueError as exc:
        raise ConfigError(f"bad header: {exc}") from None
    K = t_count - 1
    a_nodes = m0 = None
    dyn = {w: np.full((K, n, na, 1 + d), np.nan) for w in _DYN}
    g = np.full((K + 1, n, 1 + d), np.nan)
    kernels: Dict[str, np.ndarray] = {}
    for lineno, tok in rows[1:]:
        tag = tok[0]
        try:
            if tag == "A":
                a_nodes = np.array([float(v) for v in tok[1:]])
            elif tag == "M":
                m0 = np.array([float(v) for v in tok[1:]])
            elif tag == "C":
                w, k, i, j = tok[1], int(tok[2]), int(tok[3]), int(tok[4])
                vals = [float(v) for v in tok[5:]]
                if w not in _DYN or len(vals) != 1 + d:
                    raise ValueError("expected C b|sigma|f k i j followed by 1 + d numbers")
                dyn[w][k, i, j] = vals
            elif tag == "G":
                k, i = int(tok[1]), int(tok[2])
                vals = [float(v) for v in tok[3:]]
                if len(vals) != 1 + d:
                    raise ValueError("expected G k i followed by 1 + d numbers")
                g[k, i] = vals
            elif tag == "H":
                w, k, i = tok[1], int(tok[2]), int(tok[3])
                vals = [float(v) for v in tok[4:]]
                if w not in ("b", "sigma", "f", "g") or len(vals) != d:
                    raise ValueError("expected H b|sigma|f|g k i followed by d numbers")
                if w not in kernels:
                    kernels[w] = np.zeros((K + 1 if w == "g" else K, n, d))
                kernels[w][k, i] = vals
            else:
                raise ValueError(f"unknown row tag {tag!r}")
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    if a_nodes is None or a_nodes.size != na:
        raise ConfigError(f"need an A row with {na} action nodes")
    if m0 is None or m0.size != n:
        raise ConfigError(f"need an M row with {n} weights")
    for w in _DYN:
        if np.isnan(dyn[w]).any():
            raise ConfigError(f"C rows for {w} do not cover the grid")
    if np.isnan(g).any():
        raise ConfigError("G rows do not cover the grid")
    grid = Grid.uniform(T, x_lo, x_hi, t_count, n, a_nodes)
    return build_tabulated(name, grid, d, m0, dyn, g, kernels, boundary_mode, convex_k)

