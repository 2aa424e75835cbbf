"""Optional cross-check route through cvxopt's cone LP solver.

cvxopt expects ``min c'x  s.t.  G x + s = h, A x = b, s in K`` with semidefinite
blocks stored as full column-major matrices, so the conic variable is mapped
through ``G = -I`` (expanded to full matrices) and ``h = 0``.
"""
from __future__ import annotations

import numpy as np

from .cones import SQRT2, Nonnegative, SecondOrder
from .ipm import ConicProblem, ConicSolution, Status, primal_dual_residuals

_STATUS = {"optimal": Status.OPTIMAL, "primal infeasible": Status.INFEASIBLE,
           "dual infeasible": Status.UNBOUNDED}


def _expansion(p: ConicProblem):
    """Sparse map from the svec layout to cvxopt's (l, q, s) layout."""
    rows, cols, vals = [], [], []
    dims = {"l": 0, "q": [], "s": []}
    # cvxopt orders blocks as all 'l', then all 'q', then all 's'
    lp, soc, psd = [], [], []
    for blk, lo, hi in p.cone.offsets():
        (lp if isinstance(blk, Nonnegative) else soc if isinstance(blk, SecondOrder) else psd).append((blk, lo, hi))
    r = 0
    for blk, lo, hi in lp + soc:
        for k in range(lo, hi):
            rows.append(r)
            cols.append(k)
            vals.append(1.0)
            r += 1
        if isinstance(blk, Nonnegative):
            dims["l"] += blk.dim
        else:
            dims["q"].append(blk.dim)
    for blk, lo, _ in psd:
        k = blk.side
        iu, ju = np.triu_indices(k)
        for t, (i, j) in enumerate(zip(iu, ju)):
            scale = 1.0 if i == j else 1.0 / SQRT2
            rows.append(r + i + j * k)
            cols.append(lo + t)
            vals.append(scale)
            if i != j:
                rows.append(r + j + i * k)
                cols.append(lo + t)
                vals.append(scale)
        r += k * k
        dims["s"].append(k)
    return rows, cols, vals, r, dims


def solve_cvxopt(p: ConicProblem, feas_tol: float = 1e-8, gap_tol: float = 1e-8,
                 max_iters: int = 200) -> ConicSolution:
    import cvxopt
    from cvxopt import solvers

    n = p.cone.dim
    rows, cols, vals, nr, dims = _expansion(p)
    G = cvxopt.spmatrix([-float(v) for v in vals], [int(i) for i in rows], [int(j) for j in cols], (nr, n))
    h = cvxopt.matrix(0.0, (nr, 1))
    A = p.dense_A()
    opts = {"show_progress": False, "abstol": gap_tol, "reltol": gap_tol,
            "feastol": feas_tol, "maxiters": max_iters}
    try:
        res = solvers.conelp(cvxopt.matrix(p.c), G, h, dims, A=cvxopt.matrix(A),
                             b=cvxopt.matrix(p.b), options=opts)
    except (ArithmeticError, ValueError) as exc:
        nan = np.full(n, np.nan)
        return ConicSolution(x=nan, y=np.full(p.b.size, np.nan), s=nan, status=Status.NUMERICAL_FAILURE,
                             gap=np.nan, primal_objective=np.nan, dual_objective=np.nan,
                             primal_residual=np.inf, dual_residual=np.inf, iterations=0,
                             message=f"cvxopt: {exc}")
    x = np.asarray(res["x"]).ravel() if res["x"] is not None else np.full(n, np.nan)
    y = -np.asarray(res["y"]).ravel() if res["y"] is not None else np.full(p.b.size, np.nan)
    z = np.asarray(res["z"]).ravel() if res["z"] is not None else np.full(nr, np.nan)
    # z lives in cvxopt's layout; the adjoint of the expansion folds it back to
    # svec form (off-diagonals pick up (z_ij + z_ji)/sqrt2 = sqrt2 z_ij)
    s = np.zeros(n)
    np.add.at(s, np.asarray(cols, dtype=int), np.asarray(vals) * z[np.asarray(rows, dtype=int)])
    status = _STATUS.get(res["status"], Status.MAX_ITERATIONS)
    pres, dres = primal_dual_residuals(p, x, y, s)
    return ConicSolution(x=x, y=y, s=s, status=status, gap=float(x @ s),
                         primal_objective=float(p.c @ x), dual_objective=float(p.b @ y),
                         primal_residual=pres, dual_residual=dres,
                         iterations=int(res.get("iterations", 0)), message=f"cvxopt: {res['status']}")
