"""Synthesize a task-delay trace, fit it, and compare with the generator.

    python3 scripts/fit_demo.py --samples 10000 --out results/fit
"""

import argparse
from pathlib import Path

import numpy as np

from tofec.delay_model import S3_LIKE
from tofec.trace import fit_params, load_trace, synthesize_trace, write_trace


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--samples", type=int, default=10_000, help="samples per chunk size")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/fit")
    args = ap.parse_args()

    sizes = [3.0 / k for k in range(1, 7)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trace.csv"
    write_trace(path, synthesize_trace(S3_LIKE, sizes, args.samples, np.random.default_rng(args.seed)))
    records = load_trace(path)
    print(f"{'coefficient':>14} {'true':>8} {'fitted':>8} {'raw fit':>8}")
    fit = fit_params(records)
    raw = fit_params(records, correct_truncation=False)
    for name in ("fixed_shift", "shift_slope", "fixed_tail", "tail_slope"):
        print(f"{name:>14} {getattr(S3_LIKE, name):8.4f} {getattr(fit, name):8.4f} {getattr(raw, name):8.4f}")
    print(f"trace written to {path}")


if __name__ == "__main__":
    main()
