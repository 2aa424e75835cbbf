"""Command-line entry point (``slatkit``)."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, io
from .conic import SolverError
from .crlb import crlb_total, fisher_information
from .edm import DegenerateGeometry
from .model import (Gaussian, Laplacian, ObservationMask, SelectiveGaussian, cost_gaussian,
                    cost_laplacian, generate_scenario, synthesize_ranges)
from .pipeline import PipelineConfig, slat_batch, slat_recursive
from .source_loc import CircleSet, sll1_locate, slcp_locate

EXIT_CONFIG = 2
EXIT_SOLVER = 3


class ConfigError(ValueError):
    pass


def parse_noise(spec: str):
    """``gaussian:S``, ``laplacian:S``, ``selective:SG:SO:COUNT`` or ``anchor-outlier:SG:SO:K``."""
    kind, *vals = spec.split(":")
    try:
        nums = [float(v) for v in vals]
        if kind == "gaussian" and len(nums) == 1:
            return Gaussian(nums[0])
        if kind == "laplacian" and len(nums) == 1:
            return Laplacian(nums[0])
        if kind == "selective" and len(nums) == 3 and nums[2] == int(nums[2]):
            return SelectiveGaussian(nums[0], nums[1], int(nums[2]))
        if kind == "anchor-outlier" and len(nums) == 3 and nums[2] == int(nums[2]):
            return SelectiveGaussian(nums[0], nums[1], placement=("single-anchor", int(nums[2])))
    except ValueError as exc:
        raise ConfigError(f"bad noise spec {spec!r}: {exc}") from exc
    raise ConfigError(f"bad noise spec {spec!r}")


def _noise_to_bench(noise) -> dict:
    if isinstance(noise, Gaussian):
        return dict(noise="gaussian", levels=(noise.sigma,))
    if isinstance(noise, Laplacian):
        return dict(noise="laplacian", levels=(noise.sigma,))
    if noise.placement == "random-edges":
        return dict(noise="selective", levels=(noise.sigma_outlier,), sigma_gaussian=noise.sigma_gaussian,
                    outlier_count=noise.outlier_count)
    return dict(noise="selective-anchor", levels=(noise.sigma_outlier,),
                sigma_gaussian=noise.sigma_gaussian, outlier_anchor=int(noise.placement[1]))


def _load(args):
    s = io.load_scenario(args.scenario)
    r = io.load_ranges(args.ranges, n=s.n, m=s.m, l=s.l)
    return s, r


def _write_points(path, pts):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "y"])
        for i, (x, y) in enumerate(np.asarray(pts).reshape(-1, 2)):
            w.writerow([i, repr(float(x)), repr(float(y))])


def _out_dir(args) -> Path:
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_simulate(args) -> int:
    s = generate_scenario(args.anchors, args.sensors, args.targets, box=tuple(args.box), rng_seed=args.seed)
    r = synthesize_ranges(s, parse_noise(args.noise), rng_seed=args.seed)
    d = _out_dir(args)
    io.save_scenario(s, d / "scenario.json")
    io.save_ranges(r, d / "ranges.csv")
    print(f"wrote {d / 'scenario.json'} and {d / 'ranges.csv'}")
    return 0


def _pipeline_cfg(method: str) -> PipelineConfig:
    try:
        return PipelineConfig.from_method(method)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_batch(args) -> int:
    s, r = _load(args)
    est = slat_batch(s.anchors, r, _pipeline_cfg(args.method), dump_conic=args.dump_conic,
                     dump_edm=args.dump_edm)
    if args.dump_trace:
        io.save_trace(est.trace.costs, args.dump_trace)
    _write_points(_out_dir(args) / "estimate.csv", est.x)
    print(f"initial cost {est.init_cost:.6e}")
    print(f"final cost {est.final_cost:.6e}")
    print(f"iterations {est.trace.iterations} ({est.trace.reason})")
    return 0


def cmd_recursive(args) -> int:
    """Batch estimate without the last target, then add it recursively."""
    s, r = _load(args)
    if s.m < 2:
        raise ConfigError("recursive update needs at least two targets")
    method = {"slcp": "edm-r+mm", "sll1": "edm-r-l1+wmm"}.get(args.method, args.method)
    cfg = _pipeline_cfg(method)
    from .bench import _split_last_target
    prior_r, new = _split_last_target(r, s)
    prior = slat_batch(s.anchors, prior_r, cfg)
    est = slat_recursive(prior, s.anchors, new, cfg, dump_conic=args.dump_conic)
    if args.dump_trace:
        io.save_trace(est.trace.costs, args.dump_trace)
    _write_points(_out_dir(args) / "estimate.csv", est.x)
    print(f"new position initial estimate {est.x_init[-2]:.6f} {est.x_init[-1]:.6f}")
    print(f"rank-one ratio {est.locate.rank_ratio:.3e}")
    print(f"initial cost {est.init_cost:.6e}")
    print(f"final cost {est.final_cost:.6e}")
    return 0


def cmd_locate(args) -> int:
    with open(args.circles, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        centers = [[float(row["x"]), float(row["y"])] for row in rows]
        radii = [float(row["d"]) for row in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("circle file needs columns x,y,d") from exc
    try:
        c = CircleSet(centers, radii)
        c.require_relaxable()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.method == "slcp":
        res = slcp_locate(c, dump=args.dump_conic)
    elif args.method == "sll1":
        res = sll1_locate(c, sigma=args.sigma, dump=args.dump_conic)
    else:
        raise ConfigError("locate supports --method slcp or sll1")
    print(f"position {res.position[0]:.9f} {res.position[1]:.9f}")
    print(f"rank-one ratio {res.rank_ratio:.3e}")
    print(f"status {res.status.value}")
    return 0


def cmd_crlb(args) -> int:
    s = io.load_scenario(args.scenario)
    mask = ObservationMask.complete(s.l, s.n, s.m)
    f = fisher_information(s.truth(), s.anchors, mask, args.sigma, n=s.n)
    print(f"crlb {crlb_total(f, s.n + s.m):.9e}")
    return 0


def cmd_bench(args) -> int:
    over = {"seed": args.seed}
    if args.mc is not None:
        over["K"] = args.mc
    if args.noise:
        over.update(_noise_to_bench(parse_noise(args.noise)))
    if args.levels:
        over["levels"] = tuple(args.levels)
    if args.method:
        over["methods"] = tuple(m for spec in args.method for m in spec.split(","))
    if args.dump_trace:
        over["dump_trace"] = args.dump_trace
    try:
        cfg = bench.preset(args.experiment, **over)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    rep = bench.run_monte_carlo(cfg)
    files = bench.emit_report(rep, _out_dir(args))
    for row in rep.rows:
        crlb = "" if row.crlb is None else f"{row.crlb:.4g}"
        print(f"{row.sigma:<8g} {row.method:<14} rmse={row.rmse:.4g} crlb={crlb} failures={row.failures}")
    print("wrote " + ", ".join(str(f) for f in files))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="slatkit_out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="slatkit", description="Range-only localisation and tracking tools.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", parents=[common], help="draw a scenario and noisy ranges")
    sp.add_argument("--anchors", type=int, default=4)
    sp.add_argument("--sensors", type=int, default=5)
    sp.add_argument("--targets", type=int, default=6)
    sp.add_argument("--box", type=float, nargs=2, default=(0.0, 2.0))
    sp.add_argument("--noise", default="gaussian:0.01")
    sp.set_defaults(func=cmd_simulate)

    for name, func, default in (("batch", cmd_batch, "edm-r+mm"), ("recursive", cmd_recursive, "slcp")):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("--scenario", required=True)
        sp.add_argument("--ranges", required=True)
        sp.add_argument("--method", default=default)
        sp.add_argument("--dump-conic")
        sp.add_argument("--dump-trace")
        if name == "batch":
            sp.add_argument("--dump-edm")
        sp.set_defaults(func=func)

    sp = sub.add_parser("locate", parents=[common], help="single source from a CSV of circles x,y,d")
    sp.add_argument("--circles", required=True)
    sp.add_argument("--method", default="slcp")
    sp.add_argument("--sigma", type=float, default=1e6)
    sp.add_argument("--dump-conic")
    sp.set_defaults(func=cmd_locate)

    sp = sub.add_parser("crlb", parents=[common])
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--sigma", type=float, required=True)
    sp.set_defaults(func=cmd_crlb)

    sp = sub.add_parser("bench", parents=[common], help="Monte Carlo experiment")
    sp.add_argument("--experiment", default="example1", choices=bench.EXPERIMENTS)
    sp.add_argument("--mc", type=int, help="number of Monte Carlo runs")
    sp.add_argument("--noise")
    sp.add_argument("--levels", type=float, nargs="+")
    sp.add_argument("--method", action="append")
    sp.add_argument("--dump-trace", help="directory for per-method cost traces of the first run")
    sp.set_defaults(func=cmd_bench)
    return p


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if hasattr(args, "sigma") and args.command == "locate" and not args.sigma > 0:
        print("error: --sigma must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (SolverError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, DegenerateGeometry, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
