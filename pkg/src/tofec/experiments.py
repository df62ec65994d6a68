"""Experiment drivers: load sweeps, capacity tables and the workload-change run.

Every cell of a sweep at arrival-rate index ``i`` uses seed ``seed ^ i``, so
all strategies at one rate see the same arrivals and task uniforms (common
random numbers) and cells can run in any order or in parallel.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .analysis import CodeChoice, analytic_capacity
from .simulator import SimConfig, SimReport, capacity_estimate, run_simulation, with_rate

SWEEP_HEADER = ["strategy", "n", "k", "lambda", "mean_ms", "median_ms", "p90_ms", "p99_ms", "std_ms", "mean_qlen"]
ENVELOPE_HEADER = ["lambda", "best_n", "best_k", "envelope_mean_ms", "strategy", "mean_ms", "ratio"]
COMPOSITION_HEADER = ["strategy", "lambda", "k", "fraction"]
CAPACITY_HEADER = ["strategy", "n", "k", "simulated_rps", "analytic_rps"]
TIMESERIES_HEADER = ["strategy", "arrival_s", "total_ms"]
STRATEGY_ORDER = {"static": 0, "tofec": 1, "greedy": 2}
SWEEP_MAX_BACKLOG = 2000  # overloaded cells abort early; they are reported as unstable


def base_capacity(cfg: SimConfig) -> float:
    """Analytic capacity of the uncoded (1,1) strategy, the reference load scale."""
    return analytic_capacity(cfg.classes, [CodeChoice(1, 1)] * len(cfg.classes), cfg.L)


def lambda_grid(cfg: SimConfig, fractions: Sequence[float]) -> list[float]:
    cap = base_capacity(cfg)
    return [f * cap for f in fractions]


def variant(cfg: SimConfig, strategy: str, code: CodeChoice | None = None, **overrides) -> SimConfig:
    """Copy of `cfg` running a different strategy."""
    factor = overrides.get("load_factor", cfg.load_factor)
    return SimConfig(
        L=cfg.L, classes=cfg.classes, strategy=strategy,
        arrival_rate=overrides.get("arrival_rate", cfg.arrival_rate),
        duration=overrides.get("duration", cfg.duration),
        warmup=overrides.get("warmup", cfg.warmup),
        seed=overrides.get("seed", cfg.seed),
        static_codes=[code] * len(cfg.classes) if code is not None else None,
        alpha=overrides.get("alpha", cfg.alpha),
        table=cfg.table if strategy == "tofec" and factor == cfg.load_factor else None,
        load_factor=factor,
        rate_schedule=overrides.get("rate_schedule", cfg.rate_schedule),
        delay_source=cfg.delay_source,
        qlen_bound=cfg.qlen_bound,
        max_backlog=overrides.get("max_backlog", cfg.max_backlog),
    )


@dataclass(frozen=True)
class Cell:
    strategy: str
    code: CodeChoice | None
    lam_index: int
    lam: float


@dataclass
class CellResult:
    cell: Cell
    aggregates: dict

    @property
    def stable(self) -> bool:
        return not self.aggregates["unstable"]

    def row(self) -> list:
        a, c = self.aggregates, self.cell
        n, k = (c.code.n, c.code.k) if c.code is not None else ("", "")
        keys = ("mean_ms", "median_ms", "p90_ms", "p99_ms", "std_ms")
        vals = [a[key] if self.stable else math.inf for key in keys]
        qlen = a["mean_queue_length"] if self.stable else math.inf
        return [c.strategy, n, k, _fmt(c.lam), *(_fmt(v) for v in vals), _fmt(qlen)]


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf"
    return f"{x:.6f}"


def _cell_config(base: SimConfig, cell: Cell, n_requests: int) -> SimConfig:
    duration = n_requests / cell.lam
    return variant(
        base, cell.strategy, cell.code,
        arrival_rate=cell.lam, duration=duration, warmup=0.1 * duration,
        seed=base.seed ^ cell.lam_index, rate_schedule=None,
        max_backlog=min(base.max_backlog, SWEEP_MAX_BACKLOG),
    )


def _run_cell(args) -> CellResult:
    base, cell, n_requests = args
    return CellResult(cell, run_simulation(_cell_config(base, cell, n_requests)).aggregates)


@dataclass
class SweepResult:
    lambdas: list[float]
    cells: list[CellResult]

    def by(self, strategy: str, code: CodeChoice | None = None) -> list[CellResult]:
        out = [c for c in self.cells if c.cell.strategy == strategy and c.cell.code == code]
        return sorted(out, key=lambda c: c.cell.lam_index)

    def envelope(self) -> list[tuple[float, CodeChoice | None, float]]:
        """Best stable static mean delay at each rate: (lambda, code, mean_ms)."""
        out = []
        for i, lam in enumerate(self.lambdas):
            best = None
            for c in self.cells:
                if c.cell.strategy == "static" and c.cell.lam_index == i and c.stable:
                    if best is None or c.aggregates["mean_ms"] < best.aggregates["mean_ms"]:
                        best = c
            if best is None:
                out.append((lam, None, math.inf))
            else:
                out.append((lam, best.cell.code, best.aggregates["mean_ms"]))
        return out

    def envelope_ratios(self, strategy: str = "tofec") -> list[float]:
        env = self.envelope()
        return [
            (c.aggregates["mean_ms"] if c.stable else math.inf) / env[c.cell.lam_index][2]
            for c in self.by(strategy)
        ]

    def sweep_csv(self) -> str:
        rows = sorted(
            self.cells,
            key=lambda c: (
                STRATEGY_ORDER[c.cell.strategy],
                c.cell.code.k if c.cell.code else 0,
                c.cell.code.n if c.cell.code else 0,
                c.cell.lam_index,
            ),
        )
        return _csv(SWEEP_HEADER, [c.row() for c in rows])

    def envelope_csv(self) -> str:
        rows = []
        env = self.envelope()
        for strategy in ("tofec", "greedy"):
            for c in self.by(strategy):
                lam, code, best = env[c.cell.lam_index]
                mean = c.aggregates["mean_ms"] if c.stable else math.inf
                rows.append([
                    _fmt(lam), code.n if code else "", code.k if code else "", _fmt(best),
                    strategy, _fmt(mean), _fmt(mean / best if math.isfinite(best) else math.nan),
                ])
        return _csv(ENVELOPE_HEADER, rows)

    def composition_csv(self) -> str:
        rows = []
        for strategy in ("tofec", "greedy"):
            for c in self.by(strategy):
                for k, frac in sorted(c.aggregates["composition"].items(), key=lambda kv: int(kv[0])):
                    rows.append([strategy, _fmt(c.cell.lam), k, _fmt(frac)])
        return _csv(COMPOSITION_HEADER, rows)

    def summary(self) -> dict:
        env = self.envelope()
        out = {"lambdas": self.lambdas, "envelope": [
            {"lambda": lam, "code": list(code) if code else None, "mean_ms": m} for lam, code, m in env
        ]}
        for strategy in ("tofec", "greedy"):
            cells = self.by(strategy)
            if cells:
                out[strategy] = {
                    "envelope_ratio": self.envelope_ratios(strategy),
                    "composition": [c.aggregates["composition"] for c in cells],
                    "top_two_adjacent": [top_two_adjacent(c.aggregates["composition"]) for c in cells],
                    "modal_k": [modal_k(c.aggregates["composition"]) for c in cells],
                }
        return out


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def top_two_adjacent(composition: dict) -> float:
    """Largest mass carried by two neighbouring k values."""
    fr = {int(k): v for k, v in composition.items()}
    if not fr:
        return 0.0
    return max(fr.get(k, 0.0) + fr.get(k + 1, 0.0) for k in range(min(fr), max(fr) + 1))


def modal_k(composition: dict) -> int | None:
    if not composition:
        return None
    # ties go to the smaller k so the mode is well defined
    return int(min(composition, key=lambda k: (-composition[k], int(k))))


def run_sweep(
    base: SimConfig,
    lambdas: Sequence[float],
    *,
    codes: Sequence[CodeChoice] | None = None,
    strategies: Sequence[str] = ("static", "tofec", "greedy"),
    n_requests: int = 100_000,
    jobs: int = 1,
) -> SweepResult:
    if len(base.classes) != 1 and "static" in strategies and codes is None:
        raise ValueError("static sweeps over all codes need a single class")
    if codes is None:
        codes = base.classes[0].allowed_codes()
    if "tofec" in strategies and base.table is None:
        base = variant(base, "tofec")
    cells = []
    for i, lam in enumerate(lambdas):
        if lam <= 0:
            raise ValueError("sweep rates must be > 0")
        for s in strategies:
            if s == "static":
                cells.extend(Cell(s, code, i, float(lam)) for code in codes)
            else:
                cells.append(Cell(s, None, i, float(lam)))
    args = [(base, c, n_requests) for c in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, args, chunksize=4))
    else:
        results = [_run_cell(a) for a in args]
    return SweepResult(lambdas=[float(x) for x in lambdas], cells=results)


@dataclass(frozen=True)
class CapacityRow:
    strategy: str
    code: CodeChoice | None
    simulated: float
    analytic: float | None


def capacity_table(
    base: SimConfig,
    *,
    codes: Sequence[CodeChoice] = (),
    strategies: Sequence[str] = ("tofec", "greedy"),
    n_requests: int = 50_000,
    rel_tol: float = 0.005,
) -> list[CapacityRow]:
    rows = []
    for code in codes:
        res = capacity_estimate(variant(base, "static", code), n_requests, rel_tol)
        rows.append(CapacityRow("static", code, res.simulated, res.analytic))
    for s in strategies:
        res = capacity_estimate(variant(base, s), n_requests, rel_tol, start=base_capacity(base))
        rows.append(CapacityRow(s, None, res.simulated, None))
    return rows


def capacity_csv(rows: Sequence[CapacityRow]) -> str:
    return _csv(CAPACITY_HEADER, [
        [r.strategy, r.code.n if r.code else "", r.code.k if r.code else "",
         _fmt(r.simulated), _fmt(r.analytic) if r.analytic is not None else ""]
        for r in rows
    ])


# ---------------------------------------------------------------- workload change


@dataclass
class WorkloadRun:
    strategy: str
    code: CodeChoice | None
    report: SimReport
    light_mean_ms: float
    window_starts: list[float]
    window_means_ms: list[float]
    drop_time: float | None
    recovery_s: float | None
    drain_s: float | None
    peak_queue_trend: list[float] = field(default_factory=list)

    @property
    def label(self) -> str:
        return self.strategy if self.code is None else f"static({self.code.n},{self.code.k})"

    def summary(self) -> dict:
        return {
            "strategy": self.label,
            "light_mean_ms": self.light_mean_ms,
            "drop_time_s": self.drop_time,
            "recovery_s": self.recovery_s,
            "drain_s": self.drain_s,
            "peak_segment_queue_windows": self.peak_queue_trend,
            "window_start_s": self.window_starts,
            "window_mean_ms": self.window_means_ms,
        }


def _segments(schedule: Sequence[tuple[float, float]]) -> list[tuple[float, float, float]]:
    out, t = [], 0.0
    for length, rate in schedule:
        out.append((t, t + length, rate))
        t += length
    return out


def analyse_workload(report: SimReport, schedule, window: float, tolerance: float,
                     strategy: str, code: CodeChoice | None) -> WorkloadRun:
    """Windowed delay, recovery and drain times for one run of a rate schedule.

    The light-load level is the mean delay of requests arriving in the first
    segment. The drop is the start of the first segment whose rate is lower
    than its predecessor's. Recovery is measured from the drop to the start
    of the first window whose mean delay is within `tolerance` of the light
    level; drain is the time from the drop until an arrival finds the request
    queue empty. Both are ``inf`` if they never happen and ``None`` without a drop.
    """
    segs = _segments(schedule)
    t, total = report.arrival, report.total * 1e3
    done = np.isfinite(total)
    first = (t < segs[0][1]) & done
    light = float(total[first].mean()) if first.any() else math.nan
    end = segs[-1][1]
    starts = list(np.arange(0.0, end, window))
    means = []
    for a in starts:
        sel = (t >= a) & (t < a + window) & done
        means.append(float(total[sel].mean()) if sel.any() else math.nan)
    drop = next((segs[i][0] for i in range(1, len(segs)) if segs[i][2] < segs[i - 1][2]), None)
    recovery = drain = None
    trend: list[float] = []
    if drop is not None:
        recovery = math.inf
        for a, m in zip(starts, means):
            if a >= drop - 1e-9 and np.isfinite(m) and m <= (1 + tolerance) * light:
                recovery = float(a - drop)
                break
        idx = np.nonzero((t >= drop) & (report.queue_length == 0))[0]
        drain = float(t[idx[0]] - drop) if len(idx) else math.inf
        peak = max(range(len(segs)), key=lambda i: segs[i][2])
        a, b, _ = segs[peak]
        edges = np.linspace(a, b, 5)
        q = report.queue_length.astype(float)
        trend = [float(q[(t >= lo) & (t < hi)].mean()) if ((t >= lo) & (t < hi)).any() else math.nan
                 for lo, hi in zip(edges[:-1], edges[1:])]
    return WorkloadRun(strategy, code, report, light, [float(s) for s in starts], means,
                       drop, recovery, drain, trend)


def run_workload_change(
    base: SimConfig,
    *,
    schedule: Sequence[tuple[float, float]] = ((200.0, 10.0), (200.0, 70.0), (200.0, 10.0)),
    window: float = 10.0,
    tolerance: float = 0.25,
    baseline_code: CodeChoice = CodeChoice(3, 2),
    strategies: Sequence[str] = ("tofec",),
) -> list[WorkloadRun]:
    """Run each strategy and the static baseline on the same arrival sequence."""
    schedule = [tuple(map(float, s)) for s in schedule]
    runs = []
    plan = [(s, None) for s in strategies] + [("static", baseline_code)]
    for strategy, code in plan:
        cfg = variant(base, strategy, code, rate_schedule=schedule, warmup=0.0)
        rep = run_simulation(cfg)
        runs.append(analyse_workload(rep, schedule, window, tolerance, strategy, code))
    return runs


def timeseries_csv(runs: Sequence[WorkloadRun]) -> str:
    rows = []
    for run in runs:
        rep = run.report
        for a, tot in zip(rep.arrival, rep.total):
            rows.append([run.label, repr(float(a)), _fmt(tot * 1e3)])
    return _csv(TIMESERIES_HEADER, rows)


def light_load_report(cfg: SimConfig, strategy: str, code: CodeChoice | None = None,
                      rate: float | None = None, n_requests: int = 100_000) -> SimReport:
    """One constant-rate run of `strategy` at `rate` (default 1 req/s)."""
    rate = 1.0 if rate is None else rate
    c = with_rate(variant(cfg, strategy, code), rate, n_requests)
    return run_simulation(c)
