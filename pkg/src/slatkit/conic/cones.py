"""Cone descriptions and the symmetric-cone algebra used by the interior-point solver.

Vectors are laid out block by block in the order of ``ConeSpec.blocks``.  A
semidefinite block of side ``k`` occupies ``k(k+1)/2`` entries holding the
scaled upper triangle (off-diagonals multiplied by sqrt(2)) so that the plain
dot product of two svec'd matrices equals their trace inner product.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class Nonnegative:
    dim: int


@dataclass(frozen=True)
class SecondOrder:
    """Lorentz cone {(t, z): ||z|| <= t} of total dimension ``dim``."""

    dim: int


@dataclass(frozen=True)
class SemidefiniteReal:
    side: int

    @property
    def dim(self) -> int:
        return self.side * (self.side + 1) // 2


Block = Union[Nonnegative, SecondOrder, SemidefiniteReal]


@dataclass(frozen=True)
class ConeSpec:
    blocks: tuple

    def __init__(self, blocks):
        blocks = tuple(blocks)
        for b in blocks:
            if not isinstance(b, (Nonnegative, SecondOrder, SemidefiniteReal)):
                raise TypeError(f"unknown cone block {b!r}")
            size = b.side if isinstance(b, SemidefiniteReal) else b.dim
            if size < 1:
                raise ValueError(f"cone block {b!r} must have dimension >= 1")
        object.__setattr__(self, "blocks", blocks)

    @property
    def dim(self) -> int:
        return sum(b.dim for b in self.blocks)

    @property
    def degree(self) -> int:
        deg = 0
        for b in self.blocks:
            if isinstance(b, Nonnegative):
                deg += b.dim
            elif isinstance(b, SecondOrder):
                deg += 1
            else:
                deg += b.side
        return deg

    def offsets(self) -> list[tuple[Block, int, int]]:
        out, pos = [], 0
        for b in self.blocks:
            out.append((b, pos, pos + b.dim))
            pos += b.dim
        return out


# -- svec helpers -----------------------------------------------------------

def _triu(k: int):
    return np.triu_indices(k)


def svec(m: np.ndarray) -> np.ndarray:
    """Scaled upper-triangle vectorisation of a symmetric matrix (or a stack)."""
    k = m.shape[-1]
    r, c = _triu(k)
    v = m[..., r, c].copy()
    v[..., r != c] *= SQRT2
    return v


def smat(v: np.ndarray, k: int) -> np.ndarray:
    """Inverse of :func:`svec`; accepts a trailing-axis stack."""
    r, c = _triu(k)
    out = np.zeros(v.shape[:-1] + (k, k))
    vals = v.copy()
    vals[..., r != c] /= SQRT2
    out[..., r, c] = vals
    out[..., c, r] = vals
    return out


# -- cone algebra -----------------------------------------------------------

class ConeAlgebra:
    """Vectorised Jordan-algebra operations over a fixed :class:`ConeSpec`.

    Internally the blocks are regrouped into one nonnegative segment, a list of
    second-order blocks (handled with segment reductions) and the semidefinite
    blocks; ``perm`` maps the internal layout back to the user layout.
    """

    def __init__(self, spec: ConeSpec):
        self.spec = spec
        lp, soc, psd = [], [], []
        for b, lo, hi in spec.offsets():
            if isinstance(b, Nonnegative):
                lp.append(np.arange(lo, hi))
            elif isinstance(b, SecondOrder):
                soc.append((lo, hi))
            else:
                psd.append((b.side, lo, hi))
        self.n = spec.dim
        self.nu = spec.degree

        perm = []
        self.lp = slice(0, 0)
        if lp:
            idx = np.concatenate(lp)
            perm.append(idx)
            self.lp = slice(0, idx.size)
        pos = self.lp.stop

        soc_start, soc_dims = [], []
        for lo, hi in soc:
            perm.append(np.arange(lo, hi))
            soc_start.append(pos)
            soc_dims.append(hi - lo)
            pos += hi - lo
        self.soc = slice(self.lp.stop, pos)
        dims = np.asarray(soc_dims, dtype=int)
        self.soc_dims = dims
        # local offsets inside the soc segment
        self.soc_starts = np.asarray(soc_start, dtype=int) - self.soc.start
        self.soc_block_of = np.repeat(np.arange(dims.size), dims)
        nsoc = self.soc.stop - self.soc.start
        self.soc_j = np.full(nsoc, -1.0)
        self.soc_j[self.soc_starts] = 1.0

        self.psd = []
        for side, lo, hi in psd:
            perm.append(np.arange(lo, hi))
            self.psd.append((side, slice(pos, pos + hi - lo)))
            pos += hi - lo
        self.perm = np.concatenate(perm) if perm else np.zeros(0, dtype=int)
        self.iperm = np.empty_like(self.perm)
        self.iperm[self.perm] = np.arange(self.perm.size)

    # layout conversion
    def to_internal(self, v):
        return v[..., self.perm]

    def to_user(self, v):
        return v[..., self.iperm]

    def identity(self) -> np.ndarray:
        e = np.zeros(self.n)
        e[self.lp] = 1.0
        if self.soc_dims.size:
            e[self.soc.start + self.soc_starts] = 1.0
        for side, sl in self.psd:
            e[sl] = svec(np.eye(side))
        return e

    # -- soc segment helpers
    def _seg_sum(self, v):
        return np.add.reduceat(v, self.soc_starts) if self.soc_dims.size else np.zeros(0)

    def _soc_jdot(self, u, v):
        return self._seg_sum(self.soc_j * u * v)

    def soc_jnorm(self, u):
        """sqrt(u0^2 - ||u1||^2) per block, in the cancellation-free factored form."""
        us = u[self.soc]
        head = us[self.soc_starts]
        tail = np.sqrt(np.maximum(self._seg_sum(us * us) - head * head, 0.0))
        return np.sqrt(np.maximum((head - tail) * (head + tail), 0.0))

    def inner(self, u, v) -> float:
        return float(u @ v)

    def jordan(self, u, v):
        """Jordan product u o v."""
        out = np.empty_like(u)
        out[self.lp] = u[self.lp] * v[self.lp]
        if self.soc_dims.size:
            us, vs = u[self.soc], v[self.soc]
            dot = self._seg_sum(us * vs)
            u0 = us[self.soc_starts][self.soc_block_of]
            v0 = vs[self.soc_starts][self.soc_block_of]
            res = u0 * vs + v0 * us
            res[self.soc_starts] = dot
            out[self.soc] = res
        for side, sl in self.psd:
            U, V = smat(u[sl], side), smat(v[sl], side)
            P = U @ V
            out[sl] = svec(0.5 * (P + P.T))
        return out

    def jordan_solve(self, lam, lam_psd, r):
        """Solve lam o v = r for v, with lam the (diagonal-in-psd) scaled point."""
        out = np.empty_like(r)
        out[self.lp] = r[self.lp] / lam[self.lp]
        if self.soc_dims.size:
            ls, rs = lam[self.soc], r[self.soc]
            st = self.soc_starts
            l0 = ls[st]
            det = self._soc_jdot(ls, ls)
            # lam1' r1 over tails only
            tail_dot = self._seg_sum(ls * rs) - l0 * rs[st]
            v0 = (l0 * rs[st] - tail_dot) / det
            res = (rs - v0[self.soc_block_of] * ls) / l0[self.soc_block_of]
            res[st] = v0
            out[self.soc] = res
        for (side, sl), lvals in zip(self.psd, lam_psd):
            R = smat(r[sl], side)
            out[sl] = svec(2.0 * R / (lvals[:, None] + lvals[None, :]))
        return out

    def max_step(self, lam, lam_psd, d) -> float:
        """Largest alpha with lam + alpha*d in the cone (inf if unbounded)."""
        amax = np.inf
        dl = d[self.lp]
        neg = dl < 0
        if np.any(neg):
            amax = min(amax, float(np.min(-lam[self.lp][neg] / dl[neg])))
        if self.soc_dims.size:
            ls, ds = lam[self.soc], d[self.soc]
            st = self.soc_starts
            # normalise by the J-norm of lam: lam -> e after a hyperbolic rotation,
            # so the bound reduces to d0' - ||d1'|| of the transformed direction
            nrm = self.soc_jnorm(lam)
            lb = ls / nrm[self.soc_block_of]
            db = ds / nrm[self.soc_block_of]
            a = self._soc_jdot(db, db)
            bq = self._soc_jdot(lb, db)
            amax = min(amax, float(np.min(_first_roots(a, bq), initial=np.inf)))
        for (side, sl), lvals in zip(self.psd, lam_psd):
            D = smat(d[sl], side)
            isq = 1.0 / np.sqrt(lvals)
            S = D * isq[:, None] * isq[None, :]
            w = np.linalg.eigvalsh(S)[0]
            if w < 0:
                amax = min(amax, -1.0 / w)
        return amax


def _first_roots(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Smallest t > 0 solving a t^2 + 2 b t + 1 = 0, inf when there is none.

    This is the exit time of ``lb + t*db`` from the cone when ``lb`` has unit
    J-norm; the J-norm cannot vanish before the head changes sign.
    """
    out = np.full(a.shape, np.inf)
    lin = a == 0.0
    m = lin & (b < 0)
    out[m] = -0.5 / b[m]
    disc = b * b - a
    quad = ~lin & (disc >= 0)
    if np.any(quad):
        aq, bq = a[quad], b[quad]
        sq = np.sqrt(disc[quad])
        q = -(bq + np.where(bq >= 0, sq, -sq))
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = np.where(q != 0, q / aq, np.inf)
            r2 = np.where(q != 0, 1.0 / q, np.inf)
        r1 = np.where(r1 > 0, r1, np.inf)
        r2 = np.where(r2 > 0, r2, np.inf)
        out[quad] = np.minimum(r1, r2)
    return out


# -- complex Hermitian blocks --------------------------------------------------

def hermitian_embed(H: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Real symmetric matrix [[Re H, -Im H], [Im H, Re H]] of doubled side."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("expected a square matrix")
    if np.max(np.abs(H - H.conj().T), initial=0.0) > tol * max(1.0, np.max(np.abs(H), initial=0.0)):
        raise ValueError("matrix is not Hermitian")
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def hermitian_unembed(Z: np.ndarray) -> np.ndarray:
    """Hermitian matrix represented by a (not necessarily structured) real embedding.

    Averages the two copies, which is the projection onto embedded matrices.
    """
    Z = np.asarray(Z, dtype=float)
    k = Z.shape[0] // 2
    re = 0.5 * (Z[:k, :k] + Z[k:, k:])
    im = 0.5 * (Z[k:, :k] - Z[:k, k:])
    H = re + 1j * im
    return 0.5 * (H + H.conj().T)
