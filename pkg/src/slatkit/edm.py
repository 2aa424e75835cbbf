"""EDM completion initialisers and coordinate extraction.

Index convention for every rho x rho matrix here: sensors ``0..n-1``, then
targets ``n..n+m-1``, then anchors ``n+m..rho-1``.

The completed EDM is ``E = kappa(U Z U')`` where ``Z = [[I_r, X'], [X, Y]]``
is PSD of side ``n + m + r``, ``r`` is the dimension of the anchors' affine
span (2 in the usual case) and ``U`` maps the anchors to their centred
coordinates in that span and every unknown point to its own row of ``Z``.  Every EDM whose
anchor block equals the anchors' own distances has this form, and unlike the
direct ``-JEJ >= 0`` block (or a Gram block with fixed anchor distances) the
feasible set has a strict interior, which the interior-point solver needs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .conic import ConeSpec, ConicProblem, Nonnegative, SecondOrder, SemidefiniteReal, Status, SolverError
from .model import RangeData, is_collinear

log = logging.getLogger(__name__)

# tolerances accepted when the solver stops short of its own targets
ACCEPT_FEAS = 1e-6
ACCEPT_GAP = 1e-6
# EDM-R is flat (quadratically) at its optimum, so errors in E scale like the
# square root of the duality gap; ask for a much smaller gap by default
EDM_R_SOLVER_OPTS = {"gap_tol": 1e-12}


class DegenerateGeometry(ValueError):
    pass


@dataclass(frozen=True)
class PartialEDM:
    D: np.ndarray          # squared distances, NaN where free
    W: np.ndarray          # bool mask of observed entries
    n: int
    m: int
    l: int
    anchors: np.ndarray | None = field(default=None, repr=False)

    @property
    def rho(self) -> int:
        return self.n + self.m + self.l

    @property
    def anchor_index(self) -> np.ndarray:
        return np.arange(self.n + self.m, self.rho)

    def measured_pairs(self) -> np.ndarray:
        """Observed (i, j), i < j, excluding anchor-anchor pairs."""
        iu, ju = np.triu_indices(self.rho, 1)
        keep = self.W[iu, ju] & ~((iu >= self.n + self.m) & (ju >= self.n + self.m))
        return np.stack([iu[keep], ju[keep]], axis=1)

    def anchor_pairs(self) -> np.ndarray:
        a = self.anchor_index
        iu, ju = np.triu_indices(len(a), 1)
        return np.stack([a[iu], a[ju]], axis=1)


@dataclass
class EDMSolution:
    E: np.ndarray
    objective_value: float
    solver_status: Status
    n: int
    m: int
    l: int
    gram: np.ndarray = field(repr=False, default=None)
    epigraph: np.ndarray | None = field(repr=False, default=None)  # T per measured pair
    pairs: np.ndarray | None = field(repr=False, default=None)
    conic: object = field(repr=False, default=None)


def build_partial_edm(anchors, r: RangeData) -> PartialEDM:
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 2)
    n, m, l = r.n, r.m, len(anchors)
    rho = n + m + l
    D = np.full((rho, rho), np.nan)
    W = np.zeros((rho, rho), dtype=bool)
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(W, True)
    st, at = r.st_index(), r.at_index()
    ii, jj = st[:, 0], n + st[:, 1]
    D[ii, jj] = D[jj, ii] = r.st ** 2
    W[ii, jj] = W[jj, ii] = True
    kk, jj = n + m + at[:, 0], n + at[:, 1]
    D[kk, jj] = D[jj, kk] = r.at ** 2
    W[kk, jj] = W[jj, kk] = True
    a = np.arange(n + m, rho)
    diff = anchors[:, None, :] - anchors[None, :, :]
    D[np.ix_(a, a)] = np.sum(diff ** 2, axis=-1)
    W[np.ix_(a, a)] = True
    return PartialEDM(D=D, W=W, n=n, m=m, l=l, anchors=anchors)


# -- conic encoding helpers ---------------------------------------------------

def lifting_basis(p: PartialEDM, anchors) -> tuple[np.ndarray, int]:
    """Map U with Gram = U Z U' and the anchor span dimension r."""
    k = p.n + p.m
    A = np.asarray(anchors, dtype=float).reshape(-1, 2)
    Ac = A - A.mean(axis=0)
    P, sv, _ = np.linalg.svd(Ac, full_matrices=False)
    r = int(np.sum(sv > 1e-9 * max(1.0, sv[0] if sv.size else 0.0)))
    U = np.zeros((p.rho, k + r))
    U[:k, r:] = np.eye(k)
    U[k:, :r] = P[:, :r] * sv[:r]
    return U, r


def _pair_rows(V: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    """Rows a_p with <a_p, svec(Y)> = E_ij for each pair (i, j)."""
    if len(pairs) == 0:
        return np.zeros((0, V.shape[1] * (V.shape[1] + 1) // 2))
    delta = V[pairs[:, 0]] - V[pairs[:, 1]]
    return conic.svec(delta[:, :, None] * delta[:, None, :])


def _gram_to_edm(G: np.ndarray) -> np.ndarray:
    g = np.diag(G)
    E = g[:, None] + g[None, :] - 2.0 * G
    E = 0.5 * (E + E.T)
    np.fill_diagonal(E, 0.0)
    return E


def _finish(p: PartialEDM, prob: ConicProblem, sol, q: int, V, extra=None):
    ok = sol.status is Status.OPTIMAL or (
        sol.status in (Status.MAX_ITERATIONS, Status.NUMERICAL_FAILURE)
        and sol.primal_residual <= ACCEPT_FEAS and sol.dual_residual <= ACCEPT_FEAS
        and sol.relative_gap <= ACCEPT_GAP)
    if not ok:
        raise SolverError(f"EDM completion failed: {sol.status.value}", sol)
    if sol.status is not Status.OPTIMAL:
        level = logging.WARNING if max(sol.primal_residual, sol.dual_residual,
                                       sol.relative_gap) > 1e-8 else logging.DEBUG
        log.log(level, "EDM completion accepted at reduced accuracy (%s: %s)",
                sol.status.value, sol.message)
    Z = conic.smat(sol.x[:q], V.shape[1])
    G = V @ Z @ V.T
    return G, _gram_to_edm(G)


def _base_problem(p: PartialEDM):
    if p.anchors is None:
        raise ValueError("PartialEDM carries no anchor coordinates")
    V, r = lifting_basis(p, p.anchors)
    side = V.shape[1]
    q = side * (side + 1) // 2
    # Z[:r, :r] = I_r
    rows, rhs = [], []
    for i in range(r):
        for j in range(i, r):
            M = np.zeros((side, side))
            M[i, j] = M[j, i] = 1.0 if i == j else 0.5
            rows.append(conic.svec(M))
            rhs.append(1.0 if i == j else 0.0)
    return V, q, np.reshape(rows, (-1, q)), np.asarray(rhs, dtype=float)


def complete_edm_sr(p: PartialEDM, solver_opts: dict | None = None, dump=None) -> EDMSolution:
    """Nearest EDM to the squared observations in the masked Frobenius norm."""
    V, q, arows, arhs = _base_problem(p)
    pairs = p.measured_pairs()
    P = len(pairs)
    prows = _pair_rows(V, pairs)
    dsq = p.D[pairs[:, 0], pairs[:, 1]] if P else np.zeros(0)
    # variables: svec(Y) | (tau, z_1..z_P) with z_p = E_p - D_p
    nvar = q + 1 + P
    A = np.zeros((len(arows) + P, nvar))
    A[:len(arows), :q] = arows
    A[len(arows):, :q] = -prows
    A[len(arows):, q + 1:] = np.eye(P)
    b = np.concatenate([arhs, -dsq])
    c = np.zeros(nvar)
    c[q] = 1.0
    prob = ConicProblem(c, A, b, ConeSpec([SemidefiniteReal(V.shape[1]), SecondOrder(1 + P)]))
    if dump is not None:
        conic.dump_problem(prob, dump)
    sol = conic.solve(prob, **(solver_opts or {}))
    G, E = _finish(p, prob, sol, q, V)
    mask = p.W.copy()
    mask[np.ix_(p.anchor_index, p.anchor_index)] = False
    resid = np.where(mask, E - np.nan_to_num(p.D), 0.0)
    return EDMSolution(E=E, objective_value=float(np.sum(resid ** 2)), solver_status=sol.status,
                       n=p.n, m=p.m, l=p.l, gram=G, pairs=pairs, conic=sol)


def complete_edm_r(p: PartialEDM, solver_opts: dict | None = None, dump=None) -> EDMSolution:
    """Plain-range EDM completion with the epigraph variables T_ij^2 <= E_ij."""
    V, q, arows, arhs = _base_problem(p)
    pairs = p.measured_pairs()
    P = len(pairs)
    prows = _pair_rows(V, pairs)
    d = np.sqrt(p.D[pairs[:, 0], pairs[:, 1]]) if P else np.zeros(0)
    # per pair a cone (E+1, 2T, E-1): ||(2T, E-1)|| <= E+1  <=>  T^2 <= E
    nvar = q + 3 * P
    na = len(arows)
    A = np.zeros((na + 2 * P, nvar))
    A[:na, :q] = arows
    heads = q + 3 * np.arange(P)
    rows0 = na + 2 * np.arange(P)
    A[rows0, :q] = -prows
    A[rows0, heads] = 1.0
    A[rows0 + 1, :q] = -prows
    A[rows0 + 1, heads + 2] = 1.0
    b = np.concatenate([arhs, np.tile([1.0, -1.0], P)])
    c = np.zeros(nvar)
    c[:q] = prows.sum(axis=0)
    c[heads + 1] = -d  # -2 d T = -d * (2T)
    cone = ConeSpec([SemidefiniteReal(V.shape[1])] + [SecondOrder(3)] * P)
    prob = ConicProblem(c, A, b, cone)
    if dump is not None:
        conic.dump_problem(prob, dump)
    sol = conic.solve(prob, **{**EDM_R_SOLVER_OPTS, **(solver_opts or {})})
    G, E = _finish(p, prob, sol, q, V)
    T = 0.5 * sol.x[heads + 1]
    Ep = E[pairs[:, 0], pairs[:, 1]]
    return EDMSolution(E=E, objective_value=float(np.sum(Ep - 2.0 * T * d)),
                       solver_status=sol.status, n=p.n, m=p.m, l=p.l, gram=G,
                       epigraph=T, pairs=pairs, conic=sol)


def default_e_max(p: PartialEDM) -> float:
    pairs = p.measured_pairs()
    if len(pairs) == 0:
        return 1.0
    return float((1.5 * np.sqrt(np.max(p.D[pairs[:, 0], pairs[:, 1]]))) ** 2)


def envelope_coefficients(d, e_max: float):
    """Slope and intercept of the chord of |sqrt(E) - d| between d^2 and e_max."""
    d = np.asarray(d, dtype=float)
    denom = np.sqrt(e_max) + d
    return 1.0 / denom, -d ** 2 / denom


def complete_edm_r_l1(p: PartialEDM, e_max: float | None = None,
                      solver_opts: dict | None = None, dump=None) -> EDMSolution:
    """l1 plain-range completion, concave branch replaced by its chord up to e_max."""
    V, q, arows, arhs = _base_problem(p)
    pairs = p.measured_pairs()
    P = len(pairs)
    prows = _pair_rows(V, pairs)
    dsq = p.D[pairs[:, 0], pairs[:, 1]] if P else np.zeros(0)
    d = np.sqrt(dsq)
    if e_max is None:
        e_max = default_e_max(p)
    if P and e_max < dsq.max():
        raise ValueError(f"e_max={e_max:g} is below the largest squared range {dsq.max():g}")
    a, bb = envelope_coefficients(d, e_max)
    # variables: svec(Y) | slack l_p >= 0 | cones (E+1, 2(d-T), E-1)
    nvar = q + P + 3 * P
    na = len(arows)
    A = np.zeros((na + 3 * P, nvar))
    A[:na, :q] = arows
    idx = np.arange(P)
    slack = q + idx
    heads = q + P + 3 * idx
    r0 = na + 3 * idx
    A[r0, :q] = -prows
    A[r0, heads] = 1.0
    A[r0 + 1, :q] = -prows
    A[r0 + 1, heads + 2] = 1.0
    # T - aE - b = slack with T = d - s1/2
    A[r0 + 2, slack] = 1.0
    A[r0 + 2, heads + 1] = 0.5
    A[r0 + 2, :q] = a[:, None] * prows
    rhs = np.empty(3 * P)
    rhs[0::3], rhs[1::3], rhs[2::3] = 1.0, -1.0, d - bb
    b = np.concatenate([arhs, rhs])
    c = np.zeros(nvar)
    c[heads + 1] = -0.5
    blocks = [SemidefiniteReal(V.shape[1])]
    if P:
        blocks.append(Nonnegative(P))
    blocks += [SecondOrder(3)] * P
    prob = ConicProblem(c, A, b, ConeSpec(blocks))
    if dump is not None:
        conic.dump_problem(prob, dump)
    sol = conic.solve(prob, **(solver_opts or {}))
    G, E = _finish(p, prob, sol, q, V)
    T = d - 0.5 * sol.x[heads + 1]
    return EDMSolution(E=E, objective_value=float(np.sum(T)), solver_status=sol.status,
                       n=p.n, m=p.m, l=p.l, gram=G, epigraph=T, pairs=pairs, conic=sol)


# -- coordinates --------------------------------------------------------------

def procrustes(src, dst):
    """Orthogonal map (reflections allowed) plus translation taking src onto dst.

    Returns ``(R, t, residual)`` with ``dst ~ src @ R.T + t``.
    """
    src = np.asarray(src, float)
    dst = np.asarray(dst, float)
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    H = (src - mu_s).T @ (dst - mu_d)
    U, _, Vt = np.linalg.svd(H)
    R = Vt.T @ U.T
    # det(R) = -1 means the extracted frame is mirrored w.r.t. the anchors
    t = mu_d - R @ mu_s
    resid = float(np.sum((src @ R.T + t - dst) ** 2))
    return R, t, resid


def extract_coordinates(e: EDMSolution, anchors, eig_tol: float = 1e-10):
    """Planar coordinates of the unknowns from a completed EDM.

    Returns ``(stacked_coords, anchor_fit_residual)``.
    """
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 2)
    rho = e.n + e.m + e.l
    if e.E.shape != (rho, rho) or len(anchors) != e.l:
        raise ValueError("EDM size does not match the anchor count")
    if is_collinear(anchors):
        raise DegenerateGeometry("anchors are collinear")
    J = np.eye(rho) - 1.0 / rho
    G = -0.5 * J @ e.E @ J
    w, U = np.linalg.eigh(0.5 * (G + G.T))
    w, U = w[::-1][:2], U[:, ::-1][:, :2]
    if w[0] <= 0 or w[1] <= eig_tol * max(1.0, w[0]):
        raise DegenerateGeometry("completed EDM has fewer than two positive Gram eigenvalues")
    Y = U * np.sqrt(np.maximum(w, 0.0))
    R, t, resid = procrustes(Y[e.n + e.m:], anchors)
    P = Y @ R.T + t
    return P[:e.n + e.m].reshape(-1), resid


def edm_of_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sum(diff ** 2, axis=-1)


def save_edm_csv(e: EDMSolution, path) -> None:
    np.savetxt(path, e.E, delimiter=",", fmt="%.12g")
