"""Plain-text dump of a :class:`ConicProblem` for cross-checking elsewhere.

Layout (one record per line, whitespace separated, 0-based indices)::

    slatkit-conic 1
    cones <count>
    <NN|SOC|PSD> <dim-or-side>        # one line per block, in order
    objective <nnz>
    <j> <value>
    rhs <m> <nnz>
    <i> <value>
    rows <m> cols <n> nnz <nnz>
    <i> <j> <value>                   # COO triplets of A
    end

PSD variables are stored as the scaled upper triangle (row-major, off-diagonal
entries times sqrt(2)).
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .cones import ConeSpec, Nonnegative, SecondOrder, SemidefiniteReal

_TAGS = {Nonnegative: "NN", SecondOrder: "SOC", SemidefiniteReal: "PSD"}


def dump_problem(p, path) -> None:
    from .ipm import ConicProblem  # noqa: F401  (type only)
    A = sp.coo_matrix(p.A)
    lines = ["slatkit-conic 1", f"cones {len(p.cone.blocks)}"]
    for blk in p.cone.blocks:
        size = blk.side if isinstance(blk, SemidefiniteReal) else blk.dim
        lines.append(f"{_TAGS[type(blk)]} {size}")
    nz = np.flatnonzero(p.c)
    lines.append(f"objective {nz.size}")
    lines += [f"{j} {float(p.c[j])!r}" for j in nz]
    nz = np.flatnonzero(p.b)
    lines.append(f"rhs {p.b.size} {nz.size}")
    lines += [f"{i} {float(p.b[i])!r}" for i in nz]
    lines.append(f"rows {A.shape[0]} cols {A.shape[1]} nnz {A.nnz}")
    lines += [f"{int(i)} {int(j)} {float(v)!r}" for i, j, v in zip(A.row, A.col, A.data)]
    lines.append("end")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_problem(path):
    from .ipm import ConicProblem
    with open(path, encoding="utf-8") as fh:
        tok = [ln.split() for ln in fh if ln.strip()]
    if tok[0] != ["slatkit-conic", "1"]:
        raise ValueError("not a slatkit conic dump")
    pos = 1
    nblocks = int(tok[pos][1]); pos += 1
    blocks = []
    for _ in range(nblocks):
        tag, size = tok[pos]; pos += 1
        cls = {v: k for k, v in _TAGS.items()}[tag]
        blocks.append(cls(int(size)))
    cone = ConeSpec(blocks)
    c = np.zeros(cone.dim)
    nnz = int(tok[pos][1]); pos += 1
    for j, v in tok[pos:pos + nnz]:
        c[int(j)] = float(v)
    pos += nnz
    m, nnz = int(tok[pos][1]), int(tok[pos][2]); pos += 1
    b = np.zeros(m)
    for i, v in tok[pos:pos + nnz]:
        b[int(i)] = float(v)
    pos += nnz
    _, rows, _, cols, _, nnz = tok[pos]; pos += 1
    trip = np.array(tok[pos:pos + int(nnz)], dtype=float).reshape(-1, 3)
    A = sp.coo_matrix((trip[:, 2], (trip[:, 0].astype(int), trip[:, 1].astype(int))),
                      shape=(int(rows), int(cols))).tocsr()
    return ConicProblem(c, A, b, cone)
