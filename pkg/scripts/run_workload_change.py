"""10/70/10 req/s workload change: TOFEC and Greedy against static (3,2).

    python3 scripts/run_workload_change.py --config configs/workload_change.json
"""

import argparse
from pathlib import Path

from tofec.analysis import CodeChoice
from tofec.config import load_scenario
from tofec.experiments import run_workload_change, timeseries_csv


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default="configs/workload_change.json")
    ap.add_argument("--out", default="results/workload_change")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    sc = load_scenario(args.config, seed=args.seed)
    wc = sc.workload_change
    runs = run_workload_change(
        sc.sim, schedule=sc.sim.rate_schedule, window=wc["window_s"], tolerance=wc["tolerance"],
        baseline_code=CodeChoice(*wc["baseline_code"]), strategies=["tofec", "greedy"],
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "timeseries.csv").write_text(timeseries_csv(runs))
    print(f"{'strategy':>12} {'light ms':>9} {'recovery s':>11} {'drain s':>8}  peak-segment queue (4 windows)")
    for r in runs:
        trend = " ".join(f"{q:7.1f}" for q in r.peak_queue_trend)
        print(f"{r.label:>12} {r.light_mean_ms:9.1f} {r.recovery_s:11.1f} {r.drain_s:8.1f}  {trend}")


if __name__ == "__main__":
    main()
