"""Primal-dual interior-point method for small dense cone programs.

Solves

    minimize c'x  subject to  A x = b,  x in K

together with its dual ``maximize b'y s.t. A'y + s = c, s in K`` where K is a
product of nonnegative orthants, Lorentz cones and real PSD cones.  The
iteration runs on the homogeneous self-dual embedding so that infeasibility
and unboundedness come out as certificates rather than divergence.  Search
directions use Nesterov-Todd scaling with a Mehrotra predictor-corrector.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .cones import ConeAlgebra, ConeSpec, smat, svec

log = logging.getLogger(__name__)

STEP_FACTOR = 0.98
PIVOT_TOL = 1e-10


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


class SolverError(RuntimeError):
    """Raised by callers when a cone program could not be solved usefully."""

    def __init__(self, msg, solution=None):
        super().__init__(msg)
        self.solution = solution


@dataclass
class ConicProblem:
    c: np.ndarray
    A: object  # dense ndarray or scipy.sparse matrix, m x n
    b: np.ndarray
    cone: ConeSpec

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.b = np.asarray(self.b, dtype=float).ravel()
        if sp.issparse(self.A):
            self.A = sp.csr_matrix(self.A, dtype=float)
        else:
            self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = self.cone.dim
        if self.A.shape[1] != n or self.c.size != n:
            raise ValueError(
                f"column count {self.A.shape[1]} / objective length {self.c.size} "
                f"does not match cone dimension {n}")
        if self.A.shape[0] != self.b.size:
            raise ValueError("constraint matrix and right-hand side disagree")

    def dense_A(self) -> np.ndarray:
        return self.A.toarray() if sp.issparse(self.A) else self.A


@dataclass
class ConicSolution:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    status: Status
    gap: float
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    history: list = field(default_factory=list, repr=False)
    message: str = ""

    @property
    def relative_gap(self) -> float:
        return self.gap / max(1.0, abs(self.primal_objective), abs(self.dual_objective))


# -- Nesterov-Todd scaling ---------------------------------------------------

class _Scaling:
    """NT scaling W with W s = W^{-T} x = lam for the current (x, s)."""

    def __init__(self, alg: ConeAlgebra, x: np.ndarray, s: np.ndarray):
        self.alg = alg
        lp = alg.lp
        self.w_lp = np.sqrt(x[lp] / s[lp])

        if alg.soc_dims.size:
            xs, ss = x[alg.soc], s[alg.soc]
            xn = alg.soc_jnorm(x)
            sn = alg.soc_jnorm(s)
            if np.any(xn <= 0) or np.any(sn <= 0):
                raise np.linalg.LinAlgError("iterate left the second-order cone interior")
            bo = alg.soc_block_of
            xb, sb = xs / xn[bo], ss / sn[bo]
            gam = np.sqrt(0.5 * (1.0 + alg._seg_sum(xb * sb)))
            w = (xb + alg.soc_j * sb) / (2.0 * gam[bo])
            w = w.copy()
            w[alg.soc_starts] += 1.0
            self.v = w / np.sqrt(2.0 * w[alg.soc_starts])[bo]
            self.beta = np.sqrt(xn / sn)
        self.R, self.Rinv, self.lam_psd = [], [], []
        for side, sl in alg.psd:
            L1 = np.linalg.cholesky(smat(x[sl], side))
            L2 = np.linalg.cholesky(smat(s[sl], side))
            U, lam, Vt = np.linalg.svd(L2.T @ L1)
            isq = 1.0 / np.sqrt(lam)
            R = L1 @ Vt.T * isq[None, :]
            Rinv = (np.sqrt(lam)[:, None] * Vt) @ sla.solve_triangular(L1, np.eye(side), lower=True)
            self.R.append(R)
            self.Rinv.append(Rinv)
            self.lam_psd.append(lam)
        self.lam = self.W(s)
        # the psd part of lam is diagonal by construction; drop round-off
        for (side, sl), lvals in zip(alg.psd, self.lam_psd):
            self.lam[sl] = svec(np.diag(lvals))

    def _soc_apply(self, u, inverse=False):
        alg = self.alg
        bo = alg.soc_block_of
        J = alg.soc_j
        if inverse:
            jv = J * self.v
            return (2.0 * jv * alg._seg_sum(jv * u)[bo] - J * u) / self.beta[bo]
        return self.beta[bo] * (2.0 * self.v * alg._seg_sum(self.v * u)[bo] - J * u)

    def W(self, u):
        """dual space -> scaled space"""
        alg, out = self.alg, np.empty_like(u)
        out[alg.lp] = self.w_lp * u[alg.lp]
        if alg.soc_dims.size:
            out[alg.soc] = self._soc_apply(u[alg.soc])
        for (side, sl), R in zip(alg.psd, self.R):
            out[sl] = svec(R.T @ smat(u[sl], side) @ R)
        return out

    def Wt(self, u):
        """scaled space -> primal space"""
        alg, out = self.alg, np.empty_like(u)
        out[alg.lp] = self.w_lp * u[alg.lp]
        if alg.soc_dims.size:
            out[alg.soc] = self._soc_apply(u[alg.soc])
        for (side, sl), R in zip(alg.psd, self.R):
            out[sl] = svec(R @ smat(u[sl], side) @ R.T)
        return out

    def Winvt(self, u):
        """primal space -> scaled space"""
        alg, out = self.alg, np.empty_like(u)
        out[alg.lp] = u[alg.lp] / self.w_lp
        if alg.soc_dims.size:
            out[alg.soc] = self._soc_apply(u[alg.soc], inverse=True)
        for (side, sl), Ri in zip(alg.psd, self.Rinv):
            out[sl] = svec(Ri @ smat(u[sl], side) @ Ri.T)
        return out

    def scale_rows(self, A):
        """Apply W to every row of A (rows live in the dual space)."""
        alg = self.alg
        out = np.empty_like(A)
        out[:, alg.lp] = A[:, alg.lp] * self.w_lp
        if alg.soc_dims.size:
            As = A[:, alg.soc]
            bo = alg.soc_block_of
            av = np.add.reduceat(As * self.v, alg.soc_starts, axis=1)
            out[:, alg.soc] = self.beta[bo] * (2.0 * av[:, bo] * self.v - As * alg.soc_j)
        for (side, sl), R in zip(alg.psd, self.R):
            mats = smat(A[:, sl], side)
            out[:, sl] = svec(R.T @ mats @ R)
        return out


# -- preprocessing -----------------------------------------------------------

def _independent_rows(A: np.ndarray, b: np.ndarray):
    """Drop linearly dependent equality rows via pivoted QR of A'.

    Returns (kept row indices, consistent?).
    """
    m = A.shape[0]
    if m == 0:
        return np.arange(0), True
    _, R, piv = sla.qr(A.T, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0.0:
        return np.arange(0), bool(np.allclose(b, 0.0))
    rank = int(np.sum(d > PIVOT_TOL * d[0]))
    keep = np.sort(piv[:rank])
    if rank == m:
        return keep, True
    xls, *_ = np.linalg.lstsq(A[keep], b[keep], rcond=None)
    resid = np.linalg.norm(A @ xls - b)
    return keep, bool(resid <= 1e-8 * (1.0 + np.linalg.norm(b)))


# -- main routine ------------------------------------------------------------

def primal_dual_residuals(p: ConicProblem, x, y, s) -> tuple[float, float]:
    """Relative residuals ||Ax - b|| and ||A'y + s - c|| in the user layout."""
    A = p.A
    nb = max(1.0, float(np.linalg.norm(p.b)))
    nc = max(1.0, float(np.linalg.norm(p.c)))
    pres = float(np.linalg.norm(A @ x - p.b)) / nb
    dres = float(np.linalg.norm(A.T @ y + s - p.c)) / nc
    return pres, dres


def solve(p: ConicProblem, feas_tol: float = 1e-8, gap_tol: float = 1e-8,
          max_iters: int = 200, backend: str = "embedded") -> ConicSolution:
    """Solve ``p`` with the embedded interior-point method.

    ``backend="cvxopt"`` routes the same problem through cvxopt instead, for
    cross-checking; it needs the optional dependency.
    """
    if backend == "cvxopt":
        from .external import solve_cvxopt
        return solve_cvxopt(p, feas_tol=feas_tol, gap_tol=gap_tol, max_iters=max_iters)
    if backend != "embedded":
        raise ValueError(f"unknown backend {backend!r}")
    alg = ConeAlgebra(p.cone)
    A_full = alg.to_internal(p.dense_A())
    c = alg.to_internal(p.c)
    b_full = p.b.copy()
    m_full = b_full.size

    keep, consistent = _independent_rows(A_full, b_full)
    n = alg.n
    if not consistent:
        return ConicSolution(x=np.full(n, np.nan), y=np.full(m_full, np.nan),
                             s=np.full(n, np.nan), status=Status.INFEASIBLE,
                             gap=np.nan, primal_objective=np.inf, dual_objective=np.inf,
                             primal_residual=np.inf, dual_residual=np.inf, iterations=0)
    A, b = A_full[keep], b_full[keep]
    m = b.size

    e = alg.identity()
    x, s = e.copy(), e.copy()
    y = np.zeros(m)
    tau = kappa = 1.0
    nu = alg.nu

    nb = max(1.0, float(np.linalg.norm(b)))
    nc = max(1.0, float(np.linalg.norm(c)))
    # residual norms of the starting point, for relative infeasibility tests
    status = Status.MAX_ITERATIONS
    message = ""
    history = []
    best = (np.inf, x, y, s, tau)
    it = 0
    for it in range(max_iters + 1):
        F1 = A @ x - b * tau
        F2 = A.T @ y + s - c * tau
        cx, by = float(c @ x), float(b @ y)
        F3 = cx - by + kappa
        xs = float(x @ s)
        mu = (xs + tau * kappa) / (nu + 1)

        pres = np.linalg.norm(F1) / tau / nb
        dres = np.linalg.norm(F2) / tau / nc
        pobj, dobj = cx / tau, by / tau
        gap = xs / tau ** 2
        relgap = gap / max(1.0, abs(pobj), abs(dobj))
        history.append((it, pobj, dobj, pres, dres, gap, tau, kappa))
        log.debug("it %d pobj %.6e dobj %.6e pres %.1e dres %.1e gap %.1e",
                  it, pobj, dobj, pres, dres, gap)

        if pres <= feas_tol and dres <= feas_tol and relgap <= gap_tol:
            status = Status.OPTIMAL
            break
        # remember the most accurate point in case the end game breaks down
        merit = max(pres, dres, relgap)
        if merit < best[0]:
            best = (merit, x, y, s, tau)
        # infeasibility certificates (scale invariant)
        if by > 0:
            if np.linalg.norm(A.T @ y + s) / by <= feas_tol * nc and tau <= 1e-6 * max(1.0, kappa):
                status = Status.INFEASIBLE
                break
        if cx < 0:
            if np.linalg.norm(A @ x) / -cx <= feas_tol * nb and tau <= 1e-6 * max(1.0, kappa):
                status = Status.UNBOUNDED
                break
        if it == max_iters:
            break

        try:
            W = _Scaling(alg, x, s)
            AW = W.scale_rows(A)
            chol = _factor(AW)
        except np.linalg.LinAlgError as exc:
            status, message = Status.NUMERICAL_FAILURE, str(exc)
            break
        lam, lam_psd = W.lam, W.lam_psd
        Wc = W.W(c)
        AHc = AW @ Wc
        cHc = float(Wc @ Wc)
        p_vec = AHc + b
        q_vec = AHc - b
        u2 = _solve_factor(chol, p_vec)
        denom = float(q_vec @ u2) - cHc - kappa / tau

        def newton(r1, r2, r3, vhat, rtk):
            # vhat: scaled complementarity rhs; rtk: rhs of tau*dk + kappa*dt
            Wtv = W.Wt(vhat)
            Hr2 = W.Wt(W.W(r2))
            rhs1 = r1 - A @ Wtv + A @ Hr2
            rhs2 = r3 - float(c @ Wtv) + float(c @ Hr2) - rtk / tau
            u1 = _solve_factor(chol, rhs1)
            dtau = (rhs2 - float(q_vec @ u1)) / denom
            dy = u1 + u2 * dtau
            ds = r2 - A.T @ dy + c * dtau
            dx = Wtv - W.Wt(W.W(ds))
            dkappa = (rtk - kappa * dtau) / tau
            return dx, dy, ds, dtau, dkappa

        def refined(r1, r2, r3, vhat, rtk, rounds=2):
            sol = newton(r1, r2, r3, vhat, rtk)
            for _ in range(rounds):
                dx, dy, ds, dtau, dkappa = sol
                e1 = r1 - (A @ dx - b * dtau)
                e2 = r2 - (A.T @ dy + ds - c * dtau)
                e3 = r3 - (float(c @ dx) - float(b @ dy) + dkappa)
                e4 = vhat - (W.Winvt(dx) + W.W(ds))
                e5 = rtk - (kappa * dtau + tau * dkappa)
                corr = newton(e1, e2, e3, e4, e5)
                sol = tuple(u + v for u, v in zip(sol, corr))
            return sol

        def steplen(dx, ds, dtau, dkappa):
            a = min(alg.max_step(lam, lam_psd, W.Winvt(dx)),
                    alg.max_step(lam, lam_psd, W.W(ds)))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        aff = refined(-F1, -F2, -F3, -lam, -tau * kappa)
        a_aff = min(1.0, steplen(aff[0], aff[2], aff[3], aff[4]))
        sigma = (1.0 - a_aff) ** 3
        eta = 1.0 - sigma
        # corrector with second-order term
        dxs = W.Winvt(aff[0])
        dss = W.W(aff[2])
        rc = sigma * mu * e - alg.jordan(lam, lam) - alg.jordan(dxs, dss)
        vhat = alg.jordan_solve(lam, lam_psd, rc)
        rtk = sigma * mu - tau * kappa - aff[3] * aff[4]
        dx, dy, ds, dtau, dkappa = refined(-eta * F1, -eta * F2, -eta * F3, vhat, rtk)
        amax = steplen(dx, ds, dtau, dkappa)
        if STEP_FACTOR * amax < 1e-8:
            # collapsed step: fall back to a pure centring direction
            vhat = alg.jordan_solve(lam, lam_psd, mu * e - alg.jordan(lam, lam))
            zero = np.zeros_like
            dx, dy, ds, dtau, dkappa = refined(zero(F1), zero(F2), 0.0, vhat, mu - tau * kappa)
            amax = steplen(dx, ds, dtau, dkappa)
        alpha = min(1.0, STEP_FACTOR * amax)
        if not np.isfinite(alpha) or alpha < 1e-12:
            status, message = Status.NUMERICAL_FAILURE, f"step length {alpha:.3g}"
            break
        x = x + alpha * dx
        s = s + alpha * ds
        y = y + alpha * dy
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s)) and tau > 0):
            status, message = Status.NUMERICAL_FAILURE, "non-finite iterate"
            break

    if status in (Status.INFEASIBLE, Status.UNBOUNDED):
        # return the certificate, normalised
        scale = by if status is Status.INFEASIBLE else -cx
        xo, yo, so = x / scale, y / scale, s / scale
    else:
        if status is not Status.OPTIMAL:
            _, x, y, s, tau = best
        xo, yo, so = x / tau, y / tau, s / tau
    y_full = np.zeros(m_full)
    y_full[keep] = yo
    return ConicSolution(
        x=alg.to_user(xo), y=y_full, s=alg.to_user(so), status=status,
        gap=float(xo @ so), primal_objective=float(c @ xo), dual_objective=float(b @ yo),
        primal_residual=float(np.linalg.norm(A_full @ xo - b_full) / nb),
        dual_residual=float(np.linalg.norm(A.T @ yo + so - c) / nc),
        iterations=it, history=history, message=message)


def _factor(AW):
    """Triangular R with R'R = AW AW', from a QR of AW' (avoids squaring its condition)."""
    if not np.all(np.isfinite(AW)):
        raise np.linalg.LinAlgError("non-finite scaled constraint matrix")
    R = sla.qr(AW.T, mode="r", check_finite=False)[0][:AW.shape[0]]
    d = np.abs(np.diag(R))
    if d.size and not d.min() > 1e-15 * max(1.0, d.max()):
        # near-singular Schur complement: regularise the diagonal slightly
        M = R.T @ R
        shift = 1e-14 * max(1.0, float(np.max(np.diag(M))))
        for _ in range(6):
            try:
                L = np.linalg.cholesky(M + shift * np.eye(M.shape[0]))
                return L.T
            except np.linalg.LinAlgError:
                shift *= 100.0
        raise np.linalg.LinAlgError("Schur complement is not positive definite")
    return R


def _solve_factor(R, v):
    w = sla.solve_triangular(R, v, trans="T", check_finite=False)
    return sla.solve_triangular(R, w, check_finite=False)
