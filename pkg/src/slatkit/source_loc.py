"""Single-source localisation from ranges to known stations.

Stations (known sensors and anchors) are circle centres ``b_i`` and the
measured ranges their radii ``d_i``.  Points are handled in the complex plane
(``x + 1j*y``) inside this module; public results are ``(2,)`` real arrays.

Both relaxations lift the phase vector ``w = [1; u]`` (``y_i = b_i + d_i u_i``)
to a Hermitian PSD matrix with unit diagonal.  Hermitian blocks are passed to
the real conic solver through the ``[[Re, -Im], [Im, Re]]`` embedding without
imposing its block structure: the programs are invariant under the map that
restores the structure, so averaging the two copies afterwards loses nothing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .conic import ConeSpec, ConicProblem, Nonnegative, SemidefiniteReal, SolverError, Status
from .model import RANGE_FLOOR

log = logging.getLogger(__name__)

PHASE_TOL = 1e-6
LAMBDA_FLOOR = 1e-12
# zero-residual instances are flat at the optimum, so solve the relaxations tightly
RELAX_SOLVER_OPTS = {"gap_tol": 1e-12}


@dataclass(frozen=True)
class CircleSet:
    centers: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        r = np.asarray(self.radii, dtype=float).reshape(-1)
        if len(c) != len(r) or len(c) == 0:
            raise ValueError("need one radius per centre and at least one circle")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(r))):
            raise ValueError("circle data must be finite")
        if np.any(r < RANGE_FLOOR):
            raise ValueError(f"radii must be >= {RANGE_FLOOR}")
        c.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radii", r)

    def __len__(self):
        return len(self.radii)

    def require_relaxable(self):
        if len(self) < 3:
            raise ValueError(f"source localisation needs at least 3 stations, got {len(self)}")


def psi_gaussian(y, c: CircleSet) -> float:
    r = np.linalg.norm(c.centers - np.asarray(y, float).reshape(2), axis=1) - c.radii
    return float(r @ r)


def psi_laplacian(y, c: CircleSet) -> float:
    r = np.linalg.norm(c.centers - np.asarray(y, float).reshape(2), axis=1) - c.radii
    return float(np.sum(np.abs(r)))


# -- projector and weights ----------------------------------------------------

@dataclass(frozen=True)
class ProjectorParams:
    lam: np.ndarray
    sigma: float = 1e6

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).reshape(-1)
        if lam.size == 0 or np.any(lam <= 0) or abs(lam.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to one")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)


def build_projector(p: ProjectorParams) -> np.ndarray:
    """(Lambda + sigma 11')^{-1} via Sherman-Morrison."""
    li = 1.0 / p.lam
    return np.diag(li) - np.outer(li, li) / (1.0 / p.sigma + li.sum())


def exact_projector(lam) -> np.ndarray:
    """The sigma -> infinity limit, which annihilates the ones vector."""
    li = 1.0 / np.asarray(lam, dtype=float)
    return np.diag(li) - np.outer(li, li) / li.sum()


def projector_error_bound(p: ProjectorParams) -> float:
    li = 1.0 / p.lam
    s1 = li.sum()
    return float((li @ li) / (s1 * (p.sigma * s1 + 1.0)))


def kkt_lambda(K) -> np.ndarray:
    """Optimal inner weights K_i / sum(K) (uniform when every K_i is zero)."""
    K = np.asarray(K, dtype=float).reshape(-1)
    if K.size == 0 or np.any(K < 0) or not np.all(np.isfinite(K)):
        raise ValueError("residual magnitudes must be finite and nonnegative")
    total = K.sum()
    if total == 0:
        return np.full(K.size, 1.0 / K.size)
    return K / total


# -- relaxations --------------------------------------------------------------

@dataclass
class LocateResult:
    position: np.ndarray
    rank_ratio: float
    status: Status
    objective: float
    phases: np.ndarray = field(repr=False)
    weights: np.ndarray | None = field(default=None, repr=False)
    lifted: np.ndarray | None = field(default=None, repr=False)


def _normalised(c: CircleSet):
    """Complex centres shifted to their mean and scaled to O(1)."""
    b = c.centers[:, 0] + 1j * c.centers[:, 1]
    shift = b.mean()
    scale = float(max(np.max(np.abs(b - shift)), np.max(c.radii)))
    return (b - shift) / scale, c.radii / scale, shift, scale


def _embed_rect(B: np.ndarray) -> np.ndarray:
    return np.block([[B.real, -B.imag], [B.imag, B.real]])


def _unit_diagonal_rows(side: int) -> np.ndarray:
    rows = np.zeros((side, side, side))
    rows[np.arange(side), np.arange(side), np.arange(side)] = 1.0
    return conic.svec(rows)


def _phases(V: np.ndarray) -> np.ndarray:
    """u from the first column of the lifted matrix, eigenvector fallback."""
    col = V[1:, 0]
    if np.min(np.abs(col)) < PHASE_TOL:
        w, U = np.linalg.eigh(V)
        v = U[:, -1]
        v = v * np.exp(-1j * np.angle(v[0])) if abs(v[0]) > 0 else v
        col = v[1:]
    mag = np.abs(col)
    return np.where(mag > 0, col / np.where(mag > 0, mag, 1.0), 1.0 + 0j)


def _block_phases(Phi: np.ndarray, b: np.ndarray, d: np.ndarray) -> np.ndarray:
    """u from the leading eigenvector of the phase block, rotated to the best global phase.

    With centred ``b`` the cost of ``u e^{j theta}`` is a constant plus
    ``2 Re(e^{j theta} z)``, ``z = sum(conj(b_i) d_i u_i)``, so the optimal
    rotation makes ``e^{j theta} z`` real and negative.
    """
    _, U = np.linalg.eigh(Phi[1:, 1:])
    v = U[:, -1]
    mag = np.abs(v)
    u = np.where(mag > 0, v / np.where(mag > 0, mag, 1.0), 1.0 + 0j)
    z = np.sum(np.conj(b) * d * u)
    return u * np.exp(1j * (np.pi - np.angle(z))) if abs(z) > 0 else u


def _rank_ratio(V: np.ndarray) -> float:
    w = np.linalg.eigvalsh(V)
    return float(w[-1] / w[-2]) if w[-2] > 0 else np.inf


def _solve(prob, solver_opts, what):
    sol = conic.solve(prob, **{**RELAX_SOLVER_OPTS, **(solver_opts or {})})
    ok = sol.status is Status.OPTIMAL or (
        sol.status in (Status.MAX_ITERATIONS, Status.NUMERICAL_FAILURE)
        and max(sol.primal_residual, sol.dual_residual, sol.relative_gap) <= 1e-6)
    if not ok:
        raise SolverError(f"{what} relaxation failed: {sol.status.value}", sol)
    return sol


def slcp_locate(c: CircleSet, solver_opts: dict | None = None, dump=None) -> LocateResult:
    """Gaussian circle-fitting relaxation: min trace(G Phi), Phi >= 0, diag(Phi) = 1."""
    c.require_relaxable()
    b, d, shift, scale = _normalised(c)
    N = len(b)
    B = np.column_stack([b, np.diag(d)])               # y_i = (B w)_i
    C = np.eye(N) - 1.0 / N
    G = B.conj().T @ C @ B
    k = 2 * (N + 1)
    cost = 0.5 * conic.svec(conic.hermitian_embed(0.5 * (G + G.conj().T), tol=1e-9))
    prob = ConicProblem(cost, _unit_diagonal_rows(k), np.ones(k), ConeSpec([SemidefiniteReal(k)]))
    if dump is not None:
        conic.dump_problem(prob, dump)
    sol = _solve(prob, solver_opts, "SLCP")
    Phi = conic.hermitian_unembed(conic.smat(sol.x, k))
    u = _block_phases(Phi, b, d)
    y = np.mean(b + d * u)
    pos = y * scale + shift
    return LocateResult(position=np.array([pos.real, pos.imag]), rank_ratio=_rank_ratio(Phi),
                        status=sol.status, objective=float(sol.primal_objective) * scale ** 2,
                        phases=u, lifted=Phi)


def _congruence_matrix(M: np.ndarray, k_in: int) -> np.ndarray:
    """Matrix L with svec(M X M') = L svec(X) for symmetric X of side k_in."""
    q = k_in * (k_in + 1) // 2
    basis = conic.smat(np.eye(q), k_in)                  # (q, k_in, k_in)
    img = np.einsum("ij,tjk,lk->til", M, basis, M)
    return conic.svec(img).T


def sll1_locate(c: CircleSet, sigma: float = 1e6, solver_opts: dict | None = None,
                dump=None) -> LocateResult:
    """Laplacian relaxation: min t, 1'beta = t, V >= 0, diag(V) = 1,
    diag(beta) + t sigma 11' >= B V B^H."""
    c.require_relaxable()
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    b, d, shift, scale = _normalised(c)
    N = len(b)
    B = np.column_stack([b, np.diag(d)])
    kv, ks = 2 * (N + 1), 2 * N
    qv, qs = kv * (kv + 1) // 2, ks * (ks + 1) // 2
    # variables: beta (N) | svec(Zv) | svec(Zs).  The slack is taken in the
    # congruent frame T Q' (.) Q T, where Q is orthonormal with first column
    # 1/sqrt(N) and T shrinks that direction by 1/sqrt(sigma); PSD-ness is
    # unchanged and the sigma 11' term becomes N e1 e1'.
    Q = np.linalg.qr(np.column_stack([np.ones(N), np.eye(N)[:, 1:]]))[0]
    Q *= np.sign(Q[0, 0])
    TQ = Q.T.copy()
    TQ[0] /= np.sqrt(sigma)
    e1 = np.zeros((N, N))
    e1[0, 0] = N
    beta_cols = np.empty((qs, N))
    for i in range(N):
        D = np.outer(TQ[:, i], TQ[:, i]) + e1
        beta_cols[:, i] = conic.svec(np.kron(np.eye(2), D))
    A_link = np.hstack([-beta_cols, _congruence_matrix(_embed_rect(TQ @ B), kv), np.eye(qs)])
    A_diag = np.hstack([np.zeros((kv, N)), _unit_diagonal_rows(kv), np.zeros((kv, qs))])
    A = np.vstack([A_link, A_diag])
    rhs = np.concatenate([np.zeros(qs), np.ones(kv)])
    cost = np.concatenate([np.ones(N), np.zeros(qv + qs)])
    cone = ConeSpec([Nonnegative(N), SemidefiniteReal(kv), SemidefiniteReal(ks)])
    prob = ConicProblem(cost, A, rhs, cone)
    if dump is not None:
        conic.dump_problem(prob, dump)
    sol = _solve(prob, solver_opts, "SL-l1")
    beta = sol.x[:N]
    t = float(beta.sum())
    if not t > 0:
        raise SolverError("SL-l1 relaxation returned t <= 0", sol)
    V = conic.hermitian_unembed(conic.smat(sol.x[N:N + qv], kv))
    u = _phases(V)
    lam = np.maximum(beta / t, LAMBDA_FLOOR)
    yi = b + d * u
    y = np.sum(yi / lam) / np.sum(1.0 / lam)
    pos = y * scale + shift
    return LocateResult(position=np.array([pos.real, pos.imag]), rank_ratio=_rank_ratio(V),
                        status=sol.status, objective=t * scale ** 2, phases=u,
                        weights=beta / t, lifted=V)


# -- brute force --------------------------------------------------------------

def default_box(c: CircleSet):
    lo = c.centers.min(axis=0) - c.radii.max()
    hi = c.centers.max(axis=0) + c.radii.max()
    return lo, hi


def _psi_grid(X, Y, c: CircleSet, mode: str):
    tot = np.zeros_like(X)
    for (bx, by), r in zip(c.centers, c.radii):
        res = np.hypot(X - bx, Y - by) - r
        tot += res * res if mode == "gaussian" else np.abs(res)
    return tot


def grid_oracle(c: CircleSet, mode: str = "gaussian", box=None, coarse: float | None = None,
                fine: float = 1e-3, candidates: int = 8) -> np.ndarray:
    """Two-stage exhaustive minimiser of the single-source cost.

    The coarse grid covers ``box`` (default: station hull padded by the
    largest radius); the ``candidates`` best coarse points are then searched
    at step ``fine`` over one coarse cell in every direction.
    """
    if mode not in ("gaussian", "laplacian"):
        raise ValueError(f"unknown mode {mode!r}")
    if box is None:
        lo, hi = default_box(c)
    else:
        lo, hi = (np.asarray(v, dtype=float).reshape(2) for v in box)
    span = float(np.max(hi - lo))
    if coarse is None:
        coarse = max(span / 400.0, fine)
    gx = np.arange(lo[0], hi[0] + 0.5 * coarse, coarse)
    gy = np.arange(lo[1], hi[1] + 0.5 * coarse, coarse)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    vals = _psi_grid(X, Y, c, mode).ravel()
    order = np.argsort(vals, kind="stable")[:candidates]
    best, best_val = None, np.inf
    steps = np.arange(-coarse, coarse + 0.5 * fine, fine)
    for idx in order:
        cx, cy = X.ravel()[idx], Y.ravel()[idx]
        FX, FY = np.meshgrid(cx + steps, cy + steps, indexing="ij")
        fv = _psi_grid(FX, FY, c, mode)
        j = int(np.argmin(fv))
        if fv.ravel()[j] < best_val:
            best_val = float(fv.ravel()[j])
            best = np.array([FX.ravel()[j], FY.ravel()[j]])
    return best
