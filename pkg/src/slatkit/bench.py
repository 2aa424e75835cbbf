"""Monte Carlo experiments, CSV/SVG reports.

Method names:

* ``edm-sr``, ``edm-r``, ``edm-r-l1``: completion plus extraction, no refinement
* ``<init>+mm`` / ``<init>+wmm``: batch pipeline with the given refinement
* ``slcp``, ``sll1``: every target located from the (true) sensors and anchors
* ``slcp+mm``, ``sll1+wmm``: batch estimate of all but the last target, then a
  recursive update for the last one
"""
from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import edm
from .conic import SolverError
from .crlb import SingularFisher, crlb_total, fisher_information
from .io import save_trace
from .model import (Gaussian, Laplacian, ObservationMask, Scenario, SelectiveGaussian,
                    generate_scenario, synthesize_ranges)
from .pipeline import PipelineConfig, batch_initial, slat_batch, slat_recursive
from .source_loc import CircleSet, sll1_locate, slcp_locate

log = logging.getLogger(__name__)

EXPERIMENTS = ("example1", "example2-stats", "example3", "example4", "custom")
NOISE_KINDS = ("gaussian", "laplacian", "selective", "selective-anchor")
CSV_HEADER = ["sigma", "method", "rmse", "crlb", "runtime_ms", "failures"]
RUN_FAILURES = (SolverError, np.linalg.LinAlgError, edm.DegenerateGeometry, FloatingPointError)


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo study.

    ``levels`` is the swept noise parameter: sigma for gaussian/laplacian and
    the outlier sigma for the selective models, whose in-lier level is
    ``sigma_gaussian``.
    """

    experiment: str = "custom"
    l: int = 4
    n: int = 5
    m: int = 6
    box: tuple = (0.0, 2.0)
    noise: str = "gaussian"
    levels: tuple = (0.01,)
    methods: tuple = ("edm-r+mm",)
    K: int = 50
    seed: int = 0
    out_dir: str | None = None
    sigma_gaussian: float = 0.01
    outlier_count: int = 2
    outlier_anchor: int = 1
    dump_trace: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.noise not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.noise!r}")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if any(not s >= 0 for s in self.levels):
            raise ValueError("noise levels must be nonnegative")
        if self.noise.startswith("selective") and any(s <= 0 for s in self.levels):
            raise ValueError("outlier levels must be positive")
        for meth in self.methods:
            _check_method(meth)
        object.__setattr__(self, "levels", tuple(float(s) for s in self.levels))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "box", tuple(float(b) for b in self.box))

    def noise_model(self, level: float):
        if self.noise == "gaussian":
            return Gaussian(level)
        if self.noise == "laplacian":
            return Laplacian(level)
        if self.noise == "selective":
            return SelectiveGaussian(self.sigma_gaussian, level, self.outlier_count)
        return SelectiveGaussian(self.sigma_gaussian, level, placement=("single-anchor", self.outlier_anchor))


def preset(experiment: str, **overrides) -> ExperimentConfig:
    """Default settings for the named experiments (desk-scale run counts)."""
    if experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {experiment!r}")
    base = {
        "example1": dict(l=4, n=5, m=6, box=(0.0, 2.0), noise="gaussian",
                         levels=(0.005, 0.01, 0.015, 0.02, 0.025, 0.03),
                         methods=("edm-sr", "edm-r", "edm-r-l1", "edm-sr+mm", "edm-r+mm", "edm-r-l1+mm"),
                         K=50),
        "example2-stats": dict(l=4, n=10, m=11, box=(0.0, 2.0), noise="gaussian", levels=(0.025,),
                               methods=("edm-sr+mm", "edm-r+mm", "edm-r-l1+mm"), K=50),
        "example3": dict(l=5, n=0, m=1, box=(-10.0, 10.0), noise="gaussian",
                         levels=(1e-3, 1e-2, 1e-1, 1.0), methods=("sll1", "slcp"), K=100,
                         sigma_gaussian=0.04),
        "example4": dict(l=4, n=16, m=11, box=(0.0, 2.0), noise="gaussian", levels=(0.04,),
                         methods=("slcp+mm", "edm-r+mm"), K=10),
        "custom": dict(),
    }[experiment]
    base.update(overrides)
    return ExperimentConfig(experiment=experiment, **base)


def _check_method(meth: str):
    if meth in ("edm-sr", "edm-r", "edm-r-l1", "slcp", "sll1", "slcp+mm", "sll1+wmm"):
        return
    PipelineConfig.from_method(meth)


@dataclass(frozen=True)
class MCRow:
    sigma: float
    method: str
    rmse: float
    crlb: float | None
    runtime_ms: float = field(compare=False)
    failures: int = 0


@dataclass
class MCReport:
    rows: list
    config: ExperimentConfig | None = field(default=None, compare=False)
    position_stats: list = field(default_factory=list, compare=False)

    def row(self, sigma, method) -> MCRow:
        for r in self.rows:
            if r.method == method and r.sigma == sigma:
                return r
        raise KeyError((sigma, method))


# -- one Monte Carlo run --------------------------------------------------------

def _scenario(cfg: ExperimentConfig, k: int) -> Scenario:
    seed = cfg.seed if cfg.experiment == "example2-stats" else cfg.seed + k
    return generate_scenario(cfg.l, cfg.n, cfg.m, box=cfg.box, rng_seed=seed)


def _estimate(meth: str, s: Scenario, r, trace_sink=None):
    """Returns (estimated points, true points) for the error tally."""
    if meth in ("edm-sr", "edm-r", "edm-r-l1"):
        x0 = batch_initial(s.anchors, r, PipelineConfig(init_method=meth))
        return x0.reshape(-1, 2), s.truth().reshape(-1, 2)
    if meth in ("slcp", "sll1"):
        fn = slcp_locate if meth == "slcp" else sll1_locate
        stations = np.vstack([s.sensors, s.anchors])
        est = []
        for j in range(s.m):
            radii = [r.sensor_target[(i, j)] for i in range(s.n)] + [r.anchor_target[(k, j)] for k in range(s.l)]
            est.append(fn(CircleSet(stations, radii)).position)
        return np.array(est), s.targets
    if meth in ("slcp+mm", "sll1+wmm"):
        mode = "gaussian" if meth == "slcp+mm" else "laplacian"
        init = "edm-r" if mode == "gaussian" else "edm-r-l1"
        cfg = PipelineConfig(init_method=init, noise_mode=mode)
        prior_r, new = _split_last_target(r, s)
        prior = slat_batch(s.anchors, prior_r, cfg)
        est = slat_recursive(prior, s.anchors, new, cfg)
        if trace_sink is not None:
            trace_sink(est.trace.costs)
        return est.points(), s.truth().reshape(-1, 2)
    est = slat_batch(s.anchors, r, PipelineConfig.from_method(meth))
    if trace_sink is not None:
        trace_sink(est.trace.costs)
    return est.points(), s.truth().reshape(-1, 2)


def _split_last_target(r, s: Scenario):
    """Ranges of the first m-1 targets plus the n+l ranges of the last one."""
    from .model import RangeData
    last = s.m - 1
    st = {p: d for p, d in r.sensor_target.items() if p[1] != last}
    at = {p: d for p, d in r.anchor_target.items() if p[1] != last}
    mask = ObservationMask(st, at)
    prior = RangeData(mask, [st[p] for p in mask.sensor_target], [at[p] for p in mask.anchor_target],
                      n=s.n, m=last, l=s.l)
    new = [r.sensor_target[(i, last)] for i in range(s.n)] + [r.anchor_target[(k, last)] for k in range(s.l)]
    return prior, np.array(new)


def _one_run(args):
    cfg, k = args
    s = _scenario(cfg, k)
    mask = ObservationMask.complete(s.l, s.n, s.m)
    out = {}
    for li, level in enumerate(cfg.levels):
        r = synthesize_ranges(s, cfg.noise_model(level), mask, rng_seed=[cfg.seed + k, li])
        crlb_trace = None
        if cfg.noise == "gaussian" and level > 0:
            try:
                f = fisher_information(s.truth(), s.anchors, mask, level, n=s.n)
                crlb_trace = crlb_total(f, s.n + s.m) ** 2 * (s.n + s.m)
            except SingularFisher:
                crlb_trace = None
        for meth in cfg.methods:
            traces = []
            sink = traces.append if (cfg.dump_trace and k == 0) else None
            t0 = time.perf_counter()
            try:
                est, truth = _estimate(meth, s, r, sink)
                err = np.sum((est - truth) ** 2, axis=1)
                ok = bool(np.all(np.isfinite(err)))
            except RUN_FAILURES as exc:
                log.info("run %d %s at %g failed: %s", k, meth, level, exc)
                err, ok = None, False
            dt = time.perf_counter() - t0
            keep = est if (ok and cfg.experiment == "example2-stats") else None
            out[(li, meth)] = (err if ok else None, dt, crlb_trace, traces[0] if traces else None, keep)
    return k, out


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("SLATKIT_THREADS", "1")))
    except ValueError:
        return 1


def run_monte_carlo(cfg: ExperimentConfig) -> MCReport:
    jobs = [(cfg, k) for k in range(cfg.K)]
    nw = min(_workers(), cfg.K)
    if nw > 1:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            results = list(ex.map(_one_run, jobs))
    else:
        results = [_one_run(j) for j in jobs]
    results.sort(key=lambda t: t[0])
    rows, stats = [], []
    for li, level in enumerate(cfg.levels):
        crlbs = [res[(li, cfg.methods[0])][2] for _, res in results] if cfg.methods else []
        crlb = None
        if crlbs and all(c is not None for c in crlbs):
            s0 = _scenario(cfg, 0)
            crlb = float(np.sqrt(np.mean(crlbs) / (s0.n + s0.m)))
        for meth in cfg.methods:
            errs = [res[(li, meth)][0] for _, res in results]
            good = [e for e in errs if e is not None]
            fails = len(errs) - len(good)
            rmse = float(np.sqrt(np.mean(np.concatenate(good)))) if good else math.nan
            runtime = 1e3 * float(np.mean([res[(li, meth)][1] for _, res in results]))
            rows.append(MCRow(level, meth, rmse, crlb, runtime, fails))
            if cfg.experiment == "example2-stats":
                stats += _position_stats(cfg, level, meth, li, results)
            if cfg.dump_trace:
                tr = results[0][1][(li, meth)][3]
                if tr is not None:
                    Path(cfg.dump_trace).mkdir(parents=True, exist_ok=True)
                    save_trace(tr, Path(cfg.dump_trace) / f"trace_{meth}_{level:g}.csv")
        if crlb is not None:
            rows.append(MCRow(level, "crlb", crlb, crlb, 0.0, 0))
    return MCReport(rows=rows, config=cfg, position_stats=stats)


def _position_stats(cfg, level, meth, li, results):
    """Per-position sample mean and 2x2 covariance over the repeated runs."""
    s = _scenario(cfg, 0)
    truth = s.truth().reshape(-1, 2)
    ests = [res[(li, meth)][4] for _, res in results if res[(li, meth)][4] is not None]
    if not ests:
        return []
    E = np.stack(ests)
    out = []
    for p in range(E.shape[1]):
        mu = E[:, p].mean(axis=0)
        C = np.cov(E[:, p].T) if len(E) > 1 else np.zeros((2, 2))
        kind = "sensor" if p < s.n else "target"
        out.append((level, meth, p, kind, *truth[p], *mu, C[0, 0], C[0, 1], C[1, 1]))
    return out


# -- reports ------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def write_csv(r: MCReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in r.rows:
            w.writerow([_fmt(row.sigma), row.method, _fmt(row.rmse), _fmt(row.crlb),
                        _fmt(row.runtime_ms), row.failures])


def read_csv(path) -> MCReport:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        rd = csv.reader(fh)
        if next(rd) != CSV_HEADER:
            raise ValueError("not a report.csv file")
        for sig, meth, rmse, crlb, rt, fails in rd:
            rows.append(MCRow(float(sig), meth, float(rmse), float(crlb) if crlb else None,
                              float(rt), int(fails)))
    return MCReport(rows=rows)


def emit_report(r: MCReport, directory) -> list:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = [d / "report.csv", d / "report.svg"]
    write_csv(r, files[0])
    files[1].write_text(render_svg(r), encoding="utf-8")
    if r.position_stats:
        p = d / "position_stats.csv"
        with open(p, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sigma", "method", "point", "kind", "true_x", "true_y", "mean_x", "mean_y",
                        "cov_xx", "cov_xy", "cov_yy"])
            for rec in r.position_stats:
                w.writerow([_fmt(rec[0]), rec[1], rec[2], rec[3]] + [_fmt(v) for v in rec[4:]])
        files.append(p)
    return files


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def render_svg(r: MCReport, width: int = 640, height: int = 420) -> str:
    """Log-y RMSE against noise level, one polyline per method."""
    left, right, top, bottom = 70, 170, 20, 50
    pts = [(row.sigma, row.rmse) for row in r.rows if row.rmse > 0 and math.isfinite(row.rmse)]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    pw, ph = width - left - right, height - top - bottom
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    if pts:
        xs = sorted({p[0] for p in pts})
        lo = math.floor(math.log10(min(p[1] for p in pts)))
        hi = math.ceil(math.log10(max(p[1] for p in pts)))
        hi = max(hi, lo + 1)
        x0, x1 = xs[0], xs[-1] if xs[-1] > xs[0] else xs[0] + 1.0

        def X(v):
            return left + pw * (v - x0) / (x1 - x0)

        def Y(v):
            return top + ph * (hi - math.log10(v)) / (hi - lo)

        for e in range(lo, hi + 1):
            y = Y(10.0 ** e)
            out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
            out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
        for v in xs:
            x = X(v)
            out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="black"/>')
            out.append(f'<text x="{x:.2f}" y="{top + ph + 16}" text-anchor="middle">{v:g}</text>')
        methods = list(dict.fromkeys(row.method for row in r.rows))
        for i, meth in enumerate(methods):
            col = _COLORS[i % len(_COLORS)]
            line = [(row.sigma, row.rmse) for row in r.rows
                    if row.method == meth and row.rmse > 0 and math.isfinite(row.rmse)]
            if not line:
                continue
            path = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in sorted(line))
            dash = ' stroke-dasharray="5,3"' if meth == "crlb" else ""
            out.append(f'<polyline points="{path}" fill="none" stroke="{col}" stroke-width="1.5"{dash}/>')
            ly = top + 14 + 16 * i
            out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" y2="{ly - 4}" '
                       f'stroke="{col}" stroke-width="1.5"{dash}/>')
            out.append(f'<text x="{left + pw + 36}" y="{ly}">{meth}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">noise level</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">RMSE</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
