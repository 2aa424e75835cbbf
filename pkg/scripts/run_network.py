"""Network experiment: RMSE of the three EDM initialisations, before and after refinement."""
import argparse
from pathlib import Path

from slatkit.bench import emit_report, preset, run_monte_carlo


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mc", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/network")
    args = ap.parse_args()

    gauss = run_monte_carlo(preset("example1", K=args.mc, seed=args.seed))
    emit_report(gauss, Path(args.out) / "gaussian")
    methods = ("edm-r-l1+wmm", "edm-r+wmm", "edm-sr+wmm")
    outl = run_monte_carlo(preset("custom", noise="selective", levels=(0.4, 0.8, 1.2, 1.6, 2.0),
                                  methods=methods, sigma_gaussian=0.01, outlier_count=2,
                                  K=args.mc, seed=args.seed))
    emit_report(outl, Path(args.out) / "outliers")
    for rep in (gauss, outl):
        for row in rep.rows:
            print(f"{row.sigma:<6g} {row.method:<14} {row.rmse:.4g}  failures={row.failures}")


if __name__ == "__main__":
    main()
