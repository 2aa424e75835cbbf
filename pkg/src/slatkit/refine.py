"""Majorization-minimization refinement of the Gaussian and Laplacian costs.

Every step minimises a convex quadratic upper bound of the cost built at the
current iterate.  Because the bound separates over the two coordinates, the
step is one symmetric solve with a weighted graph Laplacian over the ``n + m``
unknown points (anchor terms add to the diagonal).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .model import RangeData, cost_gaussian, cost_laplacian, residuals

log = logging.getLogger(__name__)

COINCIDENT_SHIFT = 1e-9
_SHIFT_DIR = np.array([0.6, 0.8])
COST_FLOOR = 1e-28  # treated as an exact fit


@dataclass(frozen=True)
class RefinementConfig:
    max_iters: int = 500
    rel_tol: float = 1e-9
    weight_cap: float = 1e5
    ridge: float = 1e-12

    def __post_init__(self):
        if not (self.max_iters > 0 and self.rel_tol > 0 and self.weight_cap > 0 and self.ridge > 0):
            raise ValueError("refinement settings must be positive")


@dataclass
class RefinementTrace:
    costs: list
    x: np.ndarray
    reason: str
    mode: str = "gaussian"

    @property
    def iterations(self) -> int:
        return len(self.costs) - 1

    @property
    def initial_cost(self) -> float:
        return self.costs[0]

    @property
    def final_cost(self) -> float:
        return self.costs[-1]


@dataclass(frozen=True)
class SelectionMaps:
    """Index form of the selection operators.

    For a sensor-target pair ``(i, j)``, ``M x = x_i - e_j`` picks point
    ``st_left = i`` minus point ``st_right = n + j``; for an anchor-target pair
    ``(k, j)``, ``N x = -e_j`` uses point ``at_point = n + j``.
    """

    npoints: int
    st_left: np.ndarray
    st_right: np.ndarray
    at_anchor: np.ndarray
    at_point: np.ndarray
    st_d: np.ndarray = field(repr=False)
    at_d: np.ndarray = field(repr=False)

    @classmethod
    def from_ranges(cls, r: RangeData) -> "SelectionMaps":
        st, at = r.st_index(), r.at_index()
        return cls(r.n + r.m, st[:, 0], r.n + st[:, 1], at[:, 0], r.n + at[:, 1], r.st, r.at)

    def apply_m(self, x) -> np.ndarray:
        pts = np.asarray(x, float).reshape(-1, 2)
        return pts[self.st_left] - pts[self.st_right]

    def apply_n(self, x) -> np.ndarray:
        pts = np.asarray(x, float).reshape(-1, 2)
        return -pts[self.at_point]


def _separate_coincident(pts, maps: SelectionMaps, anchors):
    """Shift targets sitting exactly on a ranged partner by a fixed tiny offset."""
    for _ in range(4):
        hit_st = np.flatnonzero(np.all(pts[maps.st_left] == pts[maps.st_right], axis=1))
        hit_at = np.flatnonzero(np.all(anchors[maps.at_anchor] == pts[maps.at_point], axis=1))
        if hit_st.size == 0 and hit_at.size == 0:
            return pts
        pts = pts.copy()
        moved = np.unique(np.concatenate([maps.st_right[hit_st], maps.at_point[hit_at]]))
        pts[moved] += COINCIDENT_SHIFT * _SHIFT_DIR
        log.debug("separated %d coincident point(s)", moved.size)
    raise FloatingPointError("could not separate coincident points")


def _weighted_step(x_t, anchors, r: RangeData, w_st, w_at, ridge: float) -> np.ndarray:
    maps = SelectionMaps.from_ranges(r)
    anchors = np.asarray(anchors, float).reshape(-1, 2)
    pts = _separate_coincident(np.asarray(x_t, float).reshape(-1, 2), maps, anchors)
    P = maps.npoints
    L = np.zeros((P, P))
    rhs = np.zeros((P, 2))
    # sensor-target terms: w (|x_i - e_j|^2 - 2 d <unit, x_i - e_j>)
    i, j = maps.st_left, maps.st_right
    diff = pts[i] - pts[j]
    unit = diff / np.linalg.norm(diff, axis=1)[:, None]
    np.add.at(L, (i, i), w_st)
    np.add.at(L, (j, j), w_st)
    np.add.at(L, (i, j), -w_st)
    np.add.at(L, (j, i), -w_st)
    push = (w_st * maps.st_d)[:, None] * unit
    np.add.at(rhs, i, push)
    np.add.at(rhs, j, -push)
    # anchor-target terms: w (|a - e|^2 - 2 d <unit(a - e_t), a - e>)
    p, a = maps.at_point, anchors[maps.at_anchor]
    toward = a - pts[p]
    unit = toward / np.linalg.norm(toward, axis=1)[:, None]
    np.add.at(L, (p, p), w_at)
    np.add.at(rhs, p, w_at[:, None] * (a - maps.at_d[:, None] * unit))
    try:
        fac = sla.cho_factor(L, check_finite=False)
        out = sla.cho_solve(fac, rhs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        # proximal ridge keeps unconstrained points where they are
        eps = ridge * max(1.0, float(np.max(np.diag(L))))
        try:
            fac = sla.cho_factor(L + eps * np.eye(P), check_finite=False)
            out = sla.cho_solve(fac, rhs + eps * pts, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("majorizer system is rank deficient") from exc
    if not np.all(np.isfinite(out)):
        raise np.linalg.LinAlgError("majorizer system is rank deficient")
    return out.reshape(-1)


def mm_step(x_t, anchors, r: RangeData, cfg: RefinementConfig | None = None) -> np.ndarray:
    cfg = cfg or RefinementConfig()
    return _weighted_step(x_t, anchors, r, np.ones(r.st.size), np.ones(r.at.size), cfg.ridge)


def laplacian_weights(x_t, anchors, r: RangeData, cap: float):
    """Reweighting constants 1/|residual|, saturated at ``cap``."""
    res = np.abs(residuals(x_t, anchors, r))
    with np.errstate(divide="ignore"):
        w = np.where(res > 0, 1.0 / np.where(res > 0, res, 1.0), np.inf)
    w = np.minimum(w, cap)
    return w[:r.st.size], w[r.st.size:]


def wmm_step(x_t, anchors, r: RangeData, cfg: RefinementConfig | None = None) -> np.ndarray:
    cfg = cfg or RefinementConfig()
    w_st, w_at = laplacian_weights(x_t, anchors, r, cfg.weight_cap)
    return _weighted_step(x_t, anchors, r, w_st, w_at, cfg.ridge)


def majorizer_gap(x, x_t, anchors, r: RangeData, cfg: RefinementConfig | None = None) -> float:
    """Gamma^t(x) - Omega_L(x) as a sum of squares, with the capped weights of x_t."""
    cfg = cfg or RefinementConfig()
    w = np.concatenate(laplacian_weights(x_t, anchors, r, cfg.weight_cap))
    res = np.abs(residuals(x, anchors, r))
    sw = np.sqrt(w)
    return float(0.5 * np.sum((sw * res - 1.0 / sw) ** 2))


def majorizer_value(x, x_t, anchors, r: RangeData, cfg: RefinementConfig | None = None) -> float:
    cfg = cfg or RefinementConfig()
    w = np.concatenate(laplacian_weights(x_t, anchors, r, cfg.weight_cap))
    res = residuals(x, anchors, r)
    return float(0.5 * np.sum(w * res * res + 1.0 / w))


def run_refinement(x0, anchors, r: RangeData, mode: str = "gaussian",
                   cfg: RefinementConfig | None = None) -> RefinementTrace:
    """Iterate MM (gaussian) or weighted MM (laplacian) until the cost stalls.

    A step that raises the cost (possible in laplacian mode once weights hit
    the cap, where the surrogate is no longer tangent) is rejected and the run
    stops with reason ``"no-descent"``.
    """
    cfg = cfg or RefinementConfig()
    if mode == "gaussian":
        step, cost = mm_step, cost_gaussian
    elif mode == "laplacian":
        step, cost = wmm_step, cost_laplacian
    else:
        raise ValueError(f"unknown refinement mode {mode!r}")
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    costs = [cost(x, anchors, r)]
    reason = "max-iters"
    if costs[0] <= COST_FLOOR:
        return RefinementTrace(costs=costs, x=x, reason="converged", mode=mode)
    for _ in range(cfg.max_iters):
        x_new = step(x, anchors, r, cfg)
        c_new = cost(x_new, anchors, r)
        if c_new > costs[-1]:
            reason = "no-descent"
            break
        drop = costs[-1] - c_new
        x = x_new
        costs.append(c_new)
        if drop <= cfg.rel_tol * costs[-2] or c_new <= COST_FLOOR:
            reason = "converged"
            break
    return RefinementTrace(costs=costs, x=x, reason=reason, mode=mode)
