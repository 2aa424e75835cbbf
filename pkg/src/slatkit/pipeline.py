"""Batch and time-recursive SLAT: initialise, then refine every position."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import edm
from .model import ObservationMask, RangeData, cost_gaussian, cost_laplacian
from .refine import RefinementConfig, RefinementTrace, run_refinement
from .source_loc import CircleSet, grid_oracle, sll1_locate, slcp_locate

log = logging.getLogger(__name__)

INIT_METHODS = ("edm-sr", "edm-r", "edm-r-l1")
NOISE_MODES = ("gaussian", "laplacian")
_REFINERS = {"mm": "gaussian", "wmm": "laplacian"}


@dataclass(frozen=True)
class PipelineConfig:
    init_method: str = "edm-r"
    noise_mode: str = "gaussian"
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    sll1_sigma: float = 1e6
    rank_fallback: float = 10.0
    solver_opts: dict | None = None

    def __post_init__(self):
        if self.init_method not in INIT_METHODS:
            raise ValueError(f"unknown init method {self.init_method!r}")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"unknown noise mode {self.noise_mode!r}")
        if not self.sll1_sigma > 0:
            raise ValueError("sll1_sigma must be positive")

    @classmethod
    def from_method(cls, method: str, **kw) -> "PipelineConfig":
        """Parse names such as ``edm-r+mm`` or ``edm-r-l1+wmm``."""
        init, sep, ref = method.partition("+")
        if not sep or ref not in _REFINERS:
            raise ValueError(f"unknown pipeline method {method!r}")
        return cls(init_method=init, noise_mode=_REFINERS[ref], **kw)


@dataclass
class SlatEstimate:
    x: np.ndarray
    init_cost: float
    final_cost: float
    trace: RefinementTrace = field(repr=False)
    ranges: RangeData = field(repr=False)
    x_init: np.ndarray = field(repr=False, default=None)
    locate: object = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.ranges.n

    @property
    def m(self) -> int:
        return self.ranges.m

    def points(self) -> np.ndarray:
        return self.x.reshape(-1, 2)


def _cost(mode):
    return cost_gaussian if mode == "gaussian" else cost_laplacian


def _finish(x0, anchors, r, cfg: PipelineConfig, locate=None) -> SlatEstimate:
    trace = run_refinement(x0, anchors, r, cfg.noise_mode, cfg.refinement)
    return SlatEstimate(x=trace.x, init_cost=trace.initial_cost, final_cost=trace.final_cost,
                        trace=trace, ranges=r, x_init=np.asarray(x0, float).reshape(-1),
                        locate=locate)


def batch_initial(anchors, r: RangeData, cfg: PipelineConfig, dump_conic=None, dump_edm=None):
    """EDM completion plus coordinate extraction, without refinement."""
    p = edm.build_partial_edm(anchors, r)
    if cfg.init_method == "edm-sr":
        sol = edm.complete_edm_sr(p, solver_opts=cfg.solver_opts, dump=dump_conic)
    elif cfg.init_method == "edm-r":
        sol = edm.complete_edm_r(p, solver_opts=cfg.solver_opts, dump=dump_conic)
    else:
        sol = edm.complete_edm_r_l1(p, solver_opts=cfg.solver_opts, dump=dump_conic)
    if dump_edm is not None:
        edm.save_edm_csv(sol, dump_edm)
    x0, _ = edm.extract_coordinates(sol, anchors)
    return x0


def slat_batch(anchors, r: RangeData, cfg: PipelineConfig | None = None,
               dump_conic=None, dump_edm=None) -> SlatEstimate:
    cfg = cfg or PipelineConfig()
    x0 = batch_initial(anchors, r, cfg, dump_conic=dump_conic, dump_edm=dump_edm)
    return _finish(x0, anchors, r, cfg)


def append_target(r: RangeData, new_ranges) -> RangeData:
    """Measurement set grown by one target ranged from every sensor and anchor."""
    new = np.asarray(new_ranges, dtype=float).reshape(-1)
    if new.size != r.n + r.l:
        raise ValueError(f"expected {r.n + r.l} new ranges, got {new.size}")
    m = r.m
    st = dict(r.sensor_target)
    at = dict(r.anchor_target)
    st.update({(i, m): float(new[i]) for i in range(r.n)})
    at.update({(k, m): float(new[r.n + k]) for k in range(r.l)})
    mask = ObservationMask(st, at)
    return RangeData(mask, [st[p] for p in mask.sensor_target], [at[p] for p in mask.anchor_target],
                     n=r.n, m=m + 1, l=r.l)


def locate_new(stations, radii, cfg: PipelineConfig, dump_conic=None):
    """One new position from ranges to fixed stations; grid search if the relaxation is not rank one."""
    c = CircleSet(stations, radii)
    if cfg.noise_mode == "gaussian":
        res = slcp_locate(c, solver_opts=cfg.solver_opts, dump=dump_conic)
    else:
        res = sll1_locate(c, sigma=cfg.sll1_sigma, solver_opts=cfg.solver_opts, dump=dump_conic)
    if res.rank_ratio < cfg.rank_fallback:
        log.info("rank-one ratio %.3g below %.3g, using grid search", res.rank_ratio, cfg.rank_fallback)
        res.position = grid_oracle(c, cfg.noise_mode)
    return res


def slat_recursive(prior: SlatEstimate, anchors, new_ranges, cfg: PipelineConfig | None = None,
                   dump_conic=None) -> SlatEstimate:
    cfg = cfg or PipelineConfig()
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 2)
    r = append_target(prior.ranges, new_ranges)
    sensors = prior.points()[:prior.n]
    new = np.asarray(new_ranges, dtype=float).reshape(-1)
    res = locate_new(np.vstack([sensors, anchors]), new, cfg, dump_conic=dump_conic)
    x0 = np.concatenate([prior.x, res.position])
    return _finish(x0, anchors, r, cfg, locate=res)
