"""Scan the memory factor and load-equation factor for TOFEC.

For each (alpha, factor) pair runs TOFEC over the sweep grid and reports the
largest ratio to the static lower envelope and the smallest share of requests
served by the two most common adjacent k values. This is the scan behind the
alpha used in configs/*.json.

    python3 scripts/scan_alpha.py --alphas 0.001 0.002 0.003 0.004 0.01 0.1 0.99
"""

import argparse

from tofec.config import load_scenario
from tofec.experiments import lambda_grid, run_sweep, top_two_adjacent, variant


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default="configs/sweep.json")
    ap.add_argument("--alphas", type=float, nargs="+",
                    default=[0.001, 0.002, 0.003, 0.004, 0.006, 0.01, 0.03, 0.1, 0.99])
    ap.add_argument("--factors", type=float, nargs="+", default=[1.0, 2.0])
    ap.add_argument("--requests", type=int, default=100_000)
    args = ap.parse_args()

    sc = load_scenario(args.config)
    lams = lambda_grid(sc.sim, sc.sweep["lambda_fractions"])
    envelope = run_sweep(sc.sim, lams, strategies=["static"], n_requests=args.requests)
    env = envelope.envelope()
    print(f"{'factor':>6} {'alpha':>7} {'max ratio':>10} {'min top-2':>10}  modal k per lambda")
    for factor in args.factors:
        for alpha in args.alphas:
            base = variant(sc.sim, "tofec", alpha=alpha, load_factor=factor)
            res = run_sweep(base, lams, strategies=["tofec"], n_requests=args.requests)
            cells = res.by("tofec")
            ratios = [(c.aggregates["mean_ms"] if c.stable else float("inf")) / env[c.cell.lam_index][2]
                      for c in cells]
            shares = [top_two_adjacent(c.aggregates["composition"]) for c in cells]
            modes = [max(c.aggregates["composition"].items(), key=lambda kv: kv[1])[0] for c in cells]
            print(f"{factor:6.1f} {alpha:7.3f} {max(ratios):10.3f} {min(shares):10.3f}  {' '.join(modes)}")


if __name__ == "__main__":
    main()
