"""Fisher information and the Cramer-Rao bound for Gaussian range noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .model import ObservationMask


class SingularFisher(np.linalg.LinAlgError):
    def __init__(self, msg, condition):
        super().__init__(msg)
        self.condition = condition


@dataclass(frozen=True)
class FisherMatrix:
    F: np.ndarray
    sigma: float


def _unit_rows(x_true, anchors, mask: ObservationMask, n: int):
    pts = np.asarray(x_true, float).reshape(-1, 2)
    anchors = np.asarray(anchors, float).reshape(-1, 2)
    st = np.asarray(mask.sensor_target, dtype=int).reshape(-1, 2)
    at = np.asarray(mask.anchor_target, dtype=int).reshape(-1, 2)
    P = len(pts)
    rows = []
    if len(st):
        diff = pts[st[:, 0]] - pts[n + st[:, 1]]
        norm = np.linalg.norm(diff, axis=1)
        if np.any(norm == 0):
            raise ValueError("coincident sensor and target in the mask")
        g = np.zeros((len(st), P, 2))
        u = diff / norm[:, None]
        g[np.arange(len(st)), st[:, 0]] = u
        g[np.arange(len(st)), n + st[:, 1]] = -u
        rows.append(g.reshape(len(st), -1))
    if len(at):
        diff = pts[n + at[:, 1]] - anchors[at[:, 0]]
        norm = np.linalg.norm(diff, axis=1)
        if np.any(norm == 0):
            raise ValueError("coincident anchor and target in the mask")
        g = np.zeros((len(at), P, 2))
        g[np.arange(len(at)), n + at[:, 1]] = diff / norm[:, None]
        rows.append(g.reshape(len(at), -1))
    return np.vstack(rows) if rows else np.zeros((0, 2 * P))


def fisher_information(x_true, anchors, mask: ObservationMask, sigma: float,
                       n: int | None = None) -> FisherMatrix:
    """Sum of outer products of range gradients, scaled by 1/sigma^2.

    ``n`` is the number of sensors (sensors come first in ``x_true``); by
    default it is read off the largest sensor index in the mask.
    """
    if n is None:
        n = 1 + max((i for i, _ in mask.sensor_target), default=-1)
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    G = _unit_rows(x_true, anchors, mask, n)
    F = G.T @ G / sigma ** 2
    return FisherMatrix(F=0.5 * (F + F.T), sigma=float(sigma))


def fisher_trace_inverse(f: FisherMatrix, cond_limit: float = 1e12) -> float:
    w = np.linalg.eigvalsh(f.F)
    cond = np.inf if w[0] <= 0 else w[-1] / w[0]
    if not cond < cond_limit:
        raise SingularFisher(f"Fisher matrix is singular (condition number {cond:.3g})", cond)
    c, low = sla.cho_factor(f.F)
    inv = sla.cho_solve((c, low), np.eye(f.F.shape[0]))
    return float(np.trace(inv))


def crlb_total(f: FisherMatrix, n_plus_m: int) -> float:
    """sqrt(trace(F^-1) / (n + m))."""
    if n_plus_m < 1:
        raise ValueError("need at least one unknown point")
    return float(np.sqrt(fisher_trace_inverse(f) / n_plus_m))
