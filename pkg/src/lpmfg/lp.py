"""The occupation-measure linear program on the chain.

Variables are ``m[k, i, j]`` (interior ``i``, ``k < K``) and exit masses
``mu[k, i]``.  Each row balances the mass arriving at node ``(k, i)``::

    sum_j m[k, i, j] + mu[k, i] = arrivals(k, i)

where arrivals are ``m0`` at ``k = 0`` and the one-step push of
``m[k - 1]`` through the chain afterwards.  Boundary nodes and the final time
carry only an exit variable.  Every row owns exactly one exit variable, so
the "everybody stops at once" point is a feasible starting basis.

Boundary exit variables exist only where the chain can actually reach the
boundary; the others would be fixed at zero by an empty row.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional, TextIO, Tuple, Union

import numpy as np
import scipy.sparse as sp

from . import simplex
from .chain import TransitionModel
from .domain import (Coefficients, ExitMeasure, Grid, MomentVector, OccupationFlow, ProblemSpec,
                     ShapeError, sample_coefficients)


class SolverStateError(RuntimeError):
    """Operation needs an optimal LP solution."""


@dataclass(frozen=True)
class LinearProgram:
    objective: np.ndarray
    A: sp.csr_matrix
    rhs: np.ndarray
    m_index: np.ndarray
    mu_index: np.ndarray
    row_of: np.ndarray

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_rows(self) -> int:
        return self.rhs.size

    def var_names(self) -> list:
        names = [""] * self.n_vars
        for k, i, j in zip(*np.nonzero(self.m_index >= 0)):
            names[self.m_index[k, i, j]] = f"m_{k}_{i}_{j}"
        for k, i in zip(*np.nonzero(self.mu_index >= 0)):
            names[self.mu_index[k, i]] = f"mu_{k}_{i}"
        return names

    def row_names(self) -> list:
        names = [""] * self.n_rows
        for k, i in zip(*np.nonzero(self.row_of >= 0)):
            names[self.row_of[k, i]] = f"r_{k}_{i}"
        return names

    def index_map(self) -> dict:
        """Variable index -> ``("m", k, i, j)`` or ``("mu", k, i)``."""
        out = {}
        for k, i, j in zip(*np.nonzero(self.m_index >= 0)):
            out[int(self.m_index[k, i, j])] = ("m", int(k), int(i), int(j))
        for k, i in zip(*np.nonzero(self.mu_index >= 0)):
            out[int(self.mu_index[k, i])] = ("mu", int(k), int(i))
        return out


@dataclass(frozen=True)
class LPSolution:
    status: str
    value: float
    primal: np.ndarray
    dual: np.ndarray
    iterations: int = 0


def build_from_coefficients(coeffs: Coefficients, grid: Grid, trans: TransitionModel,
                            m0: np.ndarray) -> LinearProgram:
    K, n, na = grid.K, grid.x_count, grid.a_count
    if trans.p_stay.shape != (K, n, na) or coeffs.f.shape != (K, n, na):
        raise ShapeError("transition model / coefficients do not match the grid")
    if m0.shape != (n,):
        raise ShapeError("initial law does not match the grid")
    interior = grid.interior

    reach = np.zeros((K + 1, n), dtype=bool)
    reach[0] = interior
    reach[1:, interior] = True
    if n > 2:
        reach[1:, 0] = np.any(trans.p_down[:, 1, :] > 0, axis=1)
        reach[1:, -1] = np.any(trans.p_up[:, -2, :] > 0, axis=1)
    row_of = np.full((K + 1, n), -1, dtype=np.int64)
    row_of[reach] = np.arange(int(reach.sum()))
    n_rows = int(reach.sum())

    live = np.zeros((K, n, na), dtype=bool)
    live[:, interior, :] = True
    m_index = np.full((K, n, na), -1, dtype=np.int64)
    n_m = int(live.sum())
    m_index[live] = np.arange(n_m)
    mu_index = np.where(row_of >= 0, row_of + n_m, -1)

    kk, ii, jj = np.nonzero(live)
    cols = m_index[kk, ii, jj]
    rows_l, cols_l, vals_l = [row_of[kk, ii]], [cols], [np.ones(cols.size)]
    for shift, p in ((0, trans.p_stay), (1, trans.p_up), (-1, trans.p_down)):
        pv = p[kk, ii, jj]
        nz = pv != 0
        r = row_of[kk[nz] + 1, ii[nz] + shift]
        if np.any(r < 0):
            raise ShapeError("transition targets a node without a balance row")
        rows_l.append(r)
        cols_l.append(cols[nz])
        vals_l.append(-pv[nz])
    rows_l.append(np.arange(n_rows))
    cols_l.append(n_m + np.arange(n_rows))
    vals_l.append(np.ones(n_rows))
    A = sp.csr_matrix(
        (np.concatenate(vals_l), (np.concatenate(rows_l), np.concatenate(cols_l))),
        shape=(n_rows, n_m + n_rows),
    )

    rhs = np.zeros(n_rows)
    rhs[row_of[0, interior]] = m0[interior]
    c = np.empty(n_m + n_rows)
    c[:n_m] = coeffs.f[kk, ii, jj] * grid.dt
    rk, ri = np.nonzero(row_of >= 0)
    c[n_m + row_of[rk, ri]] = coeffs.g[rk, ri]
    return LinearProgram(objective=c, A=A, rhs=rhs, m_index=m_index, mu_index=mu_index, row_of=row_of)


def build_occupation_lp(spec: ProblemSpec, grid: Grid, trans: TransitionModel,
                        moments: MomentVector) -> LinearProgram:
    coeffs = sample_coefficients(spec, grid, moments)
    return build_from_coefficients(coeffs, grid, trans, spec.initial_weights(grid))


def solve_lp(lp: LinearProgram, tol: float = 1e-9, max_iters: Optional[int] = None) -> LPSolution:
    res = simplex.solve(lp.objective, lp.A, lp.rhs, maximize=True, tol=tol, max_iters=max_iters)
    return LPSolution(status=res.status, value=res.value, primal=res.x, dual=res.dual,
                      iterations=res.iterations)


def residual(lp: LinearProgram, v: np.ndarray) -> float:
    if v.size == 0 or lp.n_rows == 0:
        return 0.0
    return float(np.max(np.abs(lp.A @ v - lp.rhs)))


def extract_measures(lp: LinearProgram, sol: LPSolution, grid: Grid) -> Tuple[ExitMeasure, OccupationFlow]:
    if sol.status != simplex.OPTIMAL:
        raise SolverStateError(f"cannot extract measures from a {sol.status} solution")
    v = np.asarray(sol.primal, dtype=float)
    if v.size and v.min() < -1e-10:
        raise SolverStateError(f"primal entry {v.min():.3g} is negative beyond round-off")
    v = np.maximum(v, 0.0)
    m = np.zeros(lp.m_index.shape)
    sel = lp.m_index >= 0
    m[sel] = v[lp.m_index[sel]]
    mu = np.zeros(lp.mu_index.shape)
    sel = lp.mu_index >= 0
    mu[sel] = v[lp.mu_index[sel]]
    return ExitMeasure(mu), OccupationFlow(m)


def measures_to_vector(lp: LinearProgram, mu: ExitMeasure, m: OccupationFlow) -> Tuple[np.ndarray, float]:
    """LP variable vector of ``(mu, m)`` plus the largest mass placed on slots
    the LP has no variable for (boundary occupation, unreachable exits)."""
    if m.values.shape != lp.m_index.shape or mu.values.shape != lp.mu_index.shape:
        raise ShapeError("measures do not match the LP")
    v = np.zeros(lp.n_vars)
    sel = lp.m_index >= 0
    v[lp.m_index[sel]] = m.values[sel]
    sel_mu = lp.mu_index >= 0
    v[lp.mu_index[sel_mu]] = mu.values[sel_mu]
    stray = max(float(np.abs(m.values[~sel]).max(initial=0.0)),
                float(np.abs(mu.values[~sel_mu]).max(initial=0.0)))
    return v, stray


# ---------------------------------------------------------------- MPS export


def _fmt(x: float) -> str:
    return repr(float(x))


def write_mps(lp: LinearProgram, out: Union[str, TextIO], name: str = "OCCLP") -> None:
    """Write the LP in fixed-column MPS layout (maximisation via OBJSENSE).

    Name fields are widened to the longest name, so the file is also valid
    free-format MPS.
    """
    vnames = lp.var_names()
    rnames = lp.row_names()
    w = max([8, len("OBJ")] + [len(s) for s in vnames + rnames])
    lines = [f"NAME          {name}", "OBJSENSE", "    MAX", "ROWS", " N  OBJ"]
    lines += [f" E  {r}" for r in rnames]
    lines.append("COLUMNS")
    A = lp.A.tocsc()
    for q, vn in enumerate(vnames):
        entries = [("OBJ", lp.objective[q])] if lp.objective[q] != 0 else []
        lo, hi = A.indptr[q], A.indptr[q + 1]
        entries += [(rnames[r], val) for r, val in zip(A.indices[lo:hi], A.data[lo:hi])]
        for rn, val in entries:
            lines.append(f"    {vn:<{w}}  {rn:<{w}}  {_fmt(val):>24}")
    lines.append("RHS")
    for r, val in enumerate(lp.rhs):
        if val != 0:
            lines.append(f"    {'RHS':<{w}}  {rnames[r]:<{w}}  {_fmt(val):>24}")
    lines.append("ENDATA")
    text = "\n".join(lines) + "\n"
    if isinstance(out, str):
        with open(out, "w") as fh:
            fh.write(text)
    else:
        out.write(text)


def read_mps(src: Union[str, TextIO]):
    """Parse a file written by :func:`write_mps`.

    Returns ``(c, A, rhs, var_names, row_names, maximize)``.
    """
    text = open(src).read() if isinstance(src, str) else src.read()
    section = None
    maximize = False
    rows, cols = [], []
    row_pos, col_pos = {}, {}
    obj_row = None
    entries = []
    rhs_entries = []
    for raw in io.StringIO(text):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("*"):
            continue
        if not line.startswith(" "):
            section = line.split()[0]
            continue
        tok = line.split()
        if section == "OBJSENSE":
            maximize = tok[0].upper() in ("MAX", "MAXIMIZE")
        elif section == "ROWS":
            kind, rn = tok
            if kind == "N":
                obj_row = rn
            else:
                row_pos[rn] = len(rows)
                rows.append(rn)
        elif section == "COLUMNS":
            vn = tok[0]
            if vn not in col_pos:
                col_pos[vn] = len(cols)
                cols.append(vn)
            for rn, val in zip(tok[1::2], tok[2::2]):
                entries.append((rn, col_pos[vn], float(val)))
        elif section == "RHS":
            for rn, val in zip(tok[1::2], tok[2::2]):
                rhs_entries.append((rn, float(val)))
    c = np.zeros(len(cols))
    r_idx, c_idx, vals = [], [], []
    for rn, q, val in entries:
        if rn == obj_row:
            c[q] = val
        else:
            r_idx.append(row_pos[rn])
            c_idx.append(q)
            vals.append(val)
    A = sp.csr_matrix((vals, (r_idx, c_idx)), shape=(len(rows), len(cols)))
    rhs = np.zeros(len(rows))
    for rn, val in rhs_entries:
        rhs[row_pos[rn]] = val
    return c, A, rhs, cols, rows, maximize
