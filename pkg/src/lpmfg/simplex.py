"""Sparse revised simplex for ``max/min c.x  s.t.  A x = b, x >= 0``.

The basis is factorised with SuperLU and updated between refactorisations
with a product-form eta file.  Pricing is Dantzig's rule; after a run of
degenerate pivots the solver switches to Bland's rule (smallest index for
both the entering and the leaving variable) until the objective moves again,
which rules out cycling.  Every decision is a deterministic function of the
input, so identical problems give identical bases.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"


@dataclass
class SimplexResult:
    status: str
    x: np.ndarray
    value: float
    dual: np.ndarray
    iterations: int
    basis: np.ndarray = field(repr=False)


class _Basis:
    def __init__(self, A, basis):
        self.A = A
        self.m = A.shape[0]
        self.basis = basis
        self.factor()

    def factor(self):
        B = self.A[:, self.basis].tocsc()
        self.lu = splu(B, permc_spec="COLAMD", options={"SymmetricMode": False})
        self.etas = []

    def ftran(self, a):
        x = self.lu.solve(a)
        for r, d in self.etas:
            xr = x[r] / d[r]
            x -= d * xr
            x[r] = xr
        return x

    def btran(self, w):
        w = np.array(w, dtype=float)
        for r, d in reversed(self.etas):
            w[r] = (w[r] - (w @ d - w[r] * d[r])) / d[r]
        return self.lu.solve(w, trans="T")

    def replace(self, r, q, d):
        self.basis[r] = q
        self.etas.append((r, d))


def _column(A, q, m):
    col = np.zeros(m)
    lo, hi = A.indptr[q], A.indptr[q + 1]
    col[A.indices[lo:hi]] = A.data[lo:hi]
    return col


def solve(c, A, b, *, maximize=True, tol=1e-9, max_iters=None,
          refactor_every=64, degenerate_limit=50) -> SimplexResult:
    """Two-phase revised simplex.

    Returns the primal point, the objective value and row multipliers ``y``
    with ``c - A^T y <= 0`` (maximisation) at an optimum.
    """
    A = sp.csc_matrix(A, dtype=float)
    m, n = A.shape
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float).copy()
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")
    if max_iters is None:
        max_iters = 10 * (m + n)

    sign = np.where(b < 0, -1.0, 1.0)
    b *= sign
    A = (sp.diags(sign) @ A).tocsc()
    A.sort_indices()

    # crash: positive unit columns give an initial feasible basis for their rows
    basis = np.full(m, -1, dtype=np.int64)
    nnz = np.diff(A.indptr)
    for q in np.flatnonzero(nnz == 1):
        r = A.indices[A.indptr[q]]
        if basis[r] < 0 and A.data[A.indptr[q]] > 0:
            basis[r] = q
    missing = np.flatnonzero(basis < 0)
    n_art = missing.size
    if n_art:
        art = sp.csc_matrix((np.ones(n_art), (missing, np.arange(n_art))), shape=(m, n_art))
        A = sp.hstack([A, art], format="csc")
        basis[missing] = n + np.arange(n_art)
    A.sort_indices()
    AT = A.T.tocsr()
    n_all = n + n_art
    artificial = np.zeros(n_all, dtype=bool)
    artificial[n:] = True

    cost = -c if maximize else c.copy()
    cost_all = np.concatenate([cost, np.zeros(n_art)])
    scale = max(1.0, float(np.abs(cost).max(initial=0.0)))

    state = _Basis(A, basis)
    x_B = state.lu.solve(b)
    iters = 0

    def run(phase_cost, eligible, budget, pin_artificials):
        nonlocal x_B, iters
        deg_run = 0
        bland = False
        dtol = tol * max(1.0, float(np.abs(phase_cost).max(initial=0.0)))
        since = 0
        while True:
            if iters >= budget:
                return ITERATION_LIMIT
            if since >= refactor_every:
                state.factor()
                x_B = state.lu.solve(b)
                since = 0
            y = state.btran(phase_cost[state.basis])
            reduced = phase_cost - AT @ y
            reduced[state.basis] = 0.0
            cand = np.flatnonzero(eligible & (reduced < -dtol))
            if cand.size == 0:
                return OPTIMAL
            if bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmin(reduced[cand])])
            d = state.ftran(_column(A, q, m))
            piv = 1e-9 * max(1.0, float(np.abs(d).max()))
            pos = d > piv
            # in phase 2, artificials still basic sit at zero and must stay there
            basic_art = artificial[state.basis]
            blocking = pos | (basic_art & (np.abs(d) > piv)) if pin_artificials else pos
            rows = np.flatnonzero(blocking)
            if rows.size == 0:
                return UNBOUNDED
            ratios = np.where(pos[rows], np.maximum(x_B[rows], 0.0) / np.where(pos[rows], d[rows], 1.0), 0.0)
            theta = ratios.min()
            ties = rows[ratios <= theta + 1e-12 * max(1.0, theta)]
            if bland:
                r = int(ties[np.argmin(state.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(d[ties]))])
            theta = x_B[r] / d[r] if pos[r] else 0.0
            theta = max(theta, 0.0)
            x_B = x_B - theta * d
            x_B[r] = theta
            state.replace(r, q, d)
            iters += 1
            since += 1
            if theta * abs(reduced[q]) <= 1e-14 * scale:
                deg_run += 1
                if deg_run >= degenerate_limit:
                    bland = True
            else:
                deg_run = 0
                bland = False

    status = OPTIMAL
    if n_art:
        phase1 = artificial.astype(float)
        status = run(phase1, ~artificial, max_iters, False)
        infeas = float(np.sum(x_B[artificial[state.basis]]))
        if status == OPTIMAL and infeas > max(tol, 1e-9) * max(1.0, float(np.abs(b).max(initial=0.0))):
            status = INFEASIBLE
        elif status == OPTIMAL:
            # pivot zero-level artificials out where a structural column can replace them
            for r in np.flatnonzero(artificial[state.basis]):
                e = np.zeros(m)
                e[r] = 1.0
                row = AT @ state.btran(e)
                row[state.basis] = 0.0
                row[artificial] = 0.0
                cands = np.flatnonzero(np.abs(row) > 1e-7)
                if cands.size:
                    q = int(cands[0])
                    d = state.ftran(_column(A, q, m))
                    x_B = x_B.copy()
                    x_B[r] = 0.0
                    state.replace(r, q, d)
            state.factor()
            x_B = state.lu.solve(b)

    if status == OPTIMAL:
        status = run(cost_all, ~artificial, max_iters, True)

    state.factor()
    x_B = state.lu.solve(b)
    x_all = np.zeros(n_all)
    x_all[state.basis] = x_B
    x = x_all[:n]
    c_B = np.concatenate([c, np.zeros(n_art)])[state.basis]
    y = state.lu.solve(c_B, trans="T") * sign
    value = float(c @ x)
    if status == ITERATION_LIMIT:
        warnings.warn(f"simplex stopped at the iteration limit ({max_iters}); returning current basis",
                      RuntimeWarning, stacklevel=2)
    return SimplexResult(status=status, x=x, value=value, dual=y, iterations=iters, basis=state.basis.copy())
