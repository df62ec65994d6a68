"""Load sweep over all static codes plus TOFEC and Greedy; prints the envelope table.

    python3 scripts/run_sweep.py --config configs/sweep.json --out results/sweep
"""

import argparse
import time
from pathlib import Path

from tofec.analysis import CodeChoice
from tofec.config import load_scenario
from tofec.experiments import lambda_grid, run_sweep
from tofec.simulator import dumps


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default="configs/sweep.json")
    ap.add_argument("--out", default="results/sweep")
    ap.add_argument("--requests", type=int, default=None, help="override requests per cell")
    ap.add_argument("--jobs", type=int, default=None)
    args = ap.parse_args()

    sc = load_scenario(args.config)
    sw = sc.sweep
    lams = sw.get("lambdas") or lambda_grid(sc.sim, sw["lambda_fractions"])
    codes = None if sw["codes"] == "all" else [CodeChoice(*c) for c in sw["codes"]]
    t0 = time.perf_counter()
    res = run_sweep(sc.sim, lams, codes=codes, strategies=sw["strategies"],
                    n_requests=args.requests or sw["requests_per_cell"], jobs=args.jobs or sw["jobs"])
    elapsed = time.perf_counter() - t0

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(res.sweep_csv())
    (out / "envelope.csv").write_text(res.envelope_csv())
    (out / "composition.csv").write_text(res.composition_csv())
    (out / "summary.json").write_text(dumps(res.summary()))

    summary = res.summary()
    print(f"{'lambda':>8} {'best static':>12} {'env ms':>8} {'tofec/env':>10} {'greedy/env':>11} {'modal k':>8}")
    for i, (lam, code, best) in enumerate(res.envelope()):
        t = summary.get("tofec", {})
        g = summary.get("greedy", {})
        print(f"{lam:8.2f} {str(tuple(code)) if code else '-':>12} {best:8.1f} "
              f"{t.get('envelope_ratio', [float('nan')] * len(lams))[i]:10.3f} "
              f"{g.get('envelope_ratio', [float('nan')] * len(lams))[i]:11.3f} "
              f"{str(t.get('modal_k', [None] * len(lams))[i]):>8}")
    print(f"{len(res.cells)} cells in {elapsed:.1f}s; outputs in {out}")


if __name__ == "__main__":
    main()
