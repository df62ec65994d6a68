"""Command-line front end.

Exit codes: 0 success, 2 configuration or usage error, 1 runtime failure.
Set ``TOFEC_LOG`` (e.g. ``DEBUG``) to change the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ClassSpec, CodeChoice
from .codec import CodecError, StripCode, chunk_ranges, decode_chunks, encode, pad
from .config import ScenarioConfig, load_params, load_scenario
from .experiments import (
    capacity_csv,
    capacity_table,
    lambda_grid,
    run_sweep,
    run_workload_change,
    timeseries_csv,
)
from .simulator import ConfigError, dumps, run_simulation
from .solver import DERIVED_FACTOR, SolverError, build_thresholds
from .storage import DirectoryStore, MemoryStore
from .trace import TraceError, fit_params, load_trace

log = logging.getLogger("tofec")
MB = 1 << 20


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", metavar="PATH", required=True, help="scenario JSON file")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", metavar="DIR", default=None, help="directory for output files")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="stdout format")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tofec", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit delay parameters to a trace CSV")
    f.add_argument("trace", help="CSV with header op_type,chunk_size_mb,delay_ms")
    f.add_argument("--op-type", choices=("read", "write"), default="read")
    f.add_argument("--filter-fraction", type=float, default=0.1, help="worst fraction dropped per bucket")
    f.add_argument("--no-truncation-correction", action="store_true",
                   help="use raw moments of the filtered samples")
    _common(f, config=False)

    s = sub.add_parser("solve", help="build the queue-length threshold table")
    s.add_argument("--config", metavar="PATH", help="scenario JSON (classes and L)")
    s.add_argument("--params", metavar="PATH", help="delay parameter JSON (instead of --config)")
    s.add_argument("--L", type=int, default=16, help="thread count")
    s.add_argument("--file-size", type=float, default=3.0, help="file size J in MB")
    s.add_argument("--op-type", choices=("read", "write"), default="read")
    s.add_argument("--k-max", type=int, default=6)
    s.add_argument("--n-max", type=int, default=12)
    s.add_argument("--r-max", type=float, default=2.0)
    s.add_argument("--load-factor", type=float, default=None,
                   help=f"c in the load condition (default {DERIVED_FACTOR:g}; 2 gives the printed form)")
    s.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    s.add_argument("--out", metavar="DIR", default=None)
    s.add_argument("--format", choices=("json", "csv"), default="json")

    for name, help_ in (
        ("simulate", "run one simulation"),
        ("sweep", "static codes and adaptive strategies over an arrival-rate grid"),
        ("workload-change", "piecewise-constant arrival rate experiment"),
    ):
        c = sub.add_parser(name, help=help_)
        _common(c)
        if name == "sweep":
            c.add_argument("--jobs", type=int, default=None, help="worker processes")
            c.add_argument("--requests", type=int, default=None, help="requests per cell")

    d = sub.add_parser(
        "codec-demo",
        help="encode, store, read back k chunks by byte range, decode",
        description="Chunk and strip numbers in the output are 1-based.",
    )
    d.add_argument("--file", metavar="PATH", help="input file (default: random bytes)")
    d.add_argument("--size-mb", type=float, default=3.0, help="size of the random file")
    d.add_argument("--K", type=int, default=6, help="data strips")
    d.add_argument("--N", type=int, default=12, help="total strips")
    d.add_argument("--strip-mb", type=float, default=0.5, help="strip size b in MB")
    d.add_argument("--chunk-mb", type=float, default=3.0, help="chunk size B in MB")
    d.add_argument("--store-dir", metavar="DIR", help="use a directory store (default: in memory)")
    d.add_argument("--corrupt", action="store_true", help="flip one stored byte before reading")
    _common(d, config=False)
    return p


# ------------------------------------------------------------------ helpers


def _emit(args, name: str, text: str, stdout: bool) -> None:
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
    if stdout:
        sys.stdout.write(text)


def _scenario(args) -> ScenarioConfig:
    return load_scenario(args.config, seed=args.seed)


# ------------------------------------------------------------------ commands


def cmd_fit(args) -> int:
    try:
        records = load_trace(args.trace)
    except FileNotFoundError:
        raise UsageError(f"trace file not found: {args.trace}")
    try:
        params = fit_params(
            records, args.op_type, filter_fraction=args.filter_fraction,
            correct_truncation=not args.no_truncation_correction,
        )
    except TraceError as exc:
        raise UsageError(str(exc))
    doc = params.to_json()
    if args.format == "csv":
        text = "key,value\n" + "".join(f"{k},{v!r}\n" for k, v in sorted(doc.items()))
    else:
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    _emit(args, "params.json", json.dumps(doc, indent=2, sort_keys=True) + "\n", stdout=False)
    sys.stdout.write(text)
    return 0


def _solve_inputs(args) -> tuple[list[ClassSpec], int, float]:
    if args.config:
        sc = _scenario(args)
        factor = args.load_factor if args.load_factor is not None else sc.sim.load_factor
        return sc.sim.classes, sc.sim.L, factor
    if not args.params:
        raise UsageError("solve needs --config or --params")
    try:
        cls = ClassSpec(args.op_type, args.file_size, 1.0, args.k_max, args.n_max, args.r_max,
                        load_params(args.params))
    except ValueError as exc:
        raise UsageError(str(exc))
    if args.L < 1:
        raise UsageError("--L must be >= 1")
    return [cls], args.L, args.load_factor if args.load_factor is not None else DERIVED_FACTOR


def cmd_solve(args) -> int:
    classes, L, factor = _solve_inputs(args)
    table = build_thresholds(classes, L, factor)
    doc = table.to_json()
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    _emit(args, "thresholds.json", text, stdout=False)
    if args.format == "json":
        sys.stdout.write(text)
    else:
        lines = ["class,table,index,threshold,anchor_q"]
        for i, ct in enumerate(table.classes):
            for name, th, anchors in (("zeta", ct.zeta, ct.q_n), ("kappa", ct.kappa, ct.q_k)):
                for j, t in enumerate(th):
                    anchor = repr(anchors[j]) if j < len(anchors) else ""
                    lines.append(f"{i},{name},{j + 1},{t!r},{anchor}")
        sys.stdout.write("\n".join(lines) + "\n")
    for i, ct in enumerate(table.classes):
        for note in ct.truncations:
            log.warning("class %d: %s", i, note)
    return 0


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    report = run_simulation(sc.sim)
    agg = report.to_json()
    _emit(args, "report.json", dumps(agg), stdout=args.format == "json")
    if args.out or args.format == "csv":
        _emit(args, "records.csv", report.records_csv(), stdout=args.format == "csv")
    a = report.aggregates
    log.info(
        "mean %.1f ms, median %.1f, p90 %.1f, p99 %.1f, std %.1f, throughput %.2f/s",
        a["mean_ms"], a["median_ms"], a["p90_ms"], a["p99_ms"], a["std_ms"], a["throughput"],
    )
    return 0


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    sw = sc.sweep
    if len(sc.sim.classes) != 1:
        raise UsageError("sweep supports single-class scenarios")
    lambdas = sw.get("lambdas") or lambda_grid(sc.sim, sw["lambda_fractions"])
    codes = None if sw["codes"] == "all" else [CodeChoice(*c) for c in sw["codes"]]
    result = run_sweep(
        sc.sim, lambdas, codes=codes, strategies=sw["strategies"],
        n_requests=args.requests or sw["requests_per_cell"], jobs=args.jobs or sw["jobs"],
    )
    summary = result.summary()
    if sw["capacity"]:
        cl = codes if codes is not None else sc.sim.classes[0].allowed_codes()
        rows = capacity_table(
            sc.sim, codes=cl, strategies=[s for s in sw["strategies"] if s != "static"],
            n_requests=sw["capacity_requests"],
        )
        _emit(args, "capacity.csv", capacity_csv(rows), stdout=False)
        summary["capacity"] = [
            {"strategy": r.strategy, "code": list(r.code) if r.code else None,
             "simulated_rps": r.simulated, "analytic_rps": r.analytic}
            for r in rows
        ]
    _emit(args, "sweep.csv", result.sweep_csv(), stdout=args.format == "csv")
    _emit(args, "envelope.csv", result.envelope_csv(), stdout=False)
    _emit(args, "composition.csv", result.composition_csv(), stdout=False)
    _emit(args, "summary.json", dumps(summary), stdout=args.format == "json")
    return 0


def cmd_workload_change(args) -> int:
    sc = _scenario(args)
    wc = sc.workload_change
    schedule = sc.sim.rate_schedule or [(200.0, 10.0), (200.0, 70.0), (200.0, 10.0)]
    strategies = [sc.sim.strategy] if sc.sim.strategy != "static" else []
    runs = run_workload_change(
        sc.sim, schedule=schedule, window=wc["window_s"], tolerance=wc["tolerance"],
        baseline_code=CodeChoice(*wc["baseline_code"]), strategies=strategies,
    )
    summary = {"schedule": [list(s) for s in schedule], "runs": [r.summary() for r in runs]}
    _emit(args, "timeseries.csv", timeseries_csv(runs), stdout=args.format == "csv")
    _emit(args, "summary.json", dumps(summary), stdout=args.format == "json")
    return 0


def cmd_codec_demo(args) -> int:
    strip = round(args.strip_mb * MB)
    chunk = round(args.chunk_mb * MB)
    try:
        code = StripCode(args.K, args.N, strip)
        views = chunk_ranges(code, chunk)
    except CodecError as exc:
        raise UsageError(str(exc))
    rng = np.random.default_rng(args.seed or 0)
    if args.file:
        try:
            data = Path(args.file).read_bytes()
        except FileNotFoundError:
            raise UsageError(f"file not found: {args.file}")
    else:
        data = rng.integers(0, 256, round(args.size_mb * MB), dtype=np.uint8).tobytes()
    try:
        padded = pad(data, code)
    except CodecError as exc:
        raise UsageError(str(exc))
    if args.store_dir:
        store = DirectoryStore(args.store_dir)
    else:
        store = MemoryStore()
    key = "coded-object"
    store.put(key, encode(code, padded))
    store.put_meta(key, {"length": len(data), "strip_size": strip, "K": code.K, "N": code.N})
    need = code.K // views[0].strips_per_chunk
    chosen = sorted(int(i) for i in rng.choice(len(views), size=need, replace=False))
    if args.corrupt:
        # damage a byte that the chosen chunks will read
        blob = bytearray(store.get(key))
        blob[views[chosen[0]].offset + int(rng.integers(chunk))] ^= 0xFF
        store.put(key, bytes(blob))
    chunks = [(i, store.get_range(key, views[i].offset, views[i].length)) for i in chosen]
    meta = store.get_meta(key)
    restored = decode_chunks(code, chunk, chunks)[: meta["length"]]
    ok = restored == data
    report = {
        "code": [code.N, code.K],
        "chunk_code": [len(views), need],
        "strip_bytes": strip,
        "chunk_bytes": chunk,
        "chunks_used": [i + 1 for i in chosen],
        "strips_used": [[s + 1 for s in views[i].strip_indices] for i in chosen],
        "file_bytes": len(data),
        "verified": ok,
    }
    if args.format == "csv":
        text = "key,value\n" + "".join(f"{k},\"{v}\"\n" for k, v in report.items())
    else:
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    _emit(args, "codec_demo.json", json.dumps(report, indent=2, sort_keys=True) + "\n", stdout=False)
    sys.stdout.write(text)
    if not ok:
        log.error("decoded bytes do not match the original file")
        return 1
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "workload-change": cmd_workload_change,
    "codec-demo": cmd_codec_demo,
}


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("TOFEC_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"tofec {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, CodecError, TraceError) as exc:
        print(f"tofec {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.debug("unhandled failure", exc_info=True)
        print(f"tofec {args.command}: internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
