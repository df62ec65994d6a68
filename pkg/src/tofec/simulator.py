"""Discrete-event simulation of the coded-access proxy.

Requests arrive as a Poisson process, wait FIFO in a request queue, and are
admitted only when a thread is idle and the task queue is empty. Admission
forks n tasks; the request departs when k of them finish, and its remaining
tasks are cancelled (queued) or preempted (running). Per-request records and
post-warmup aggregates are returned in a `SimReport`.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernel
from .analysis import ClassSpec, CodeChoice, analytic_capacity, check_mix
from .delay_model import shift, tail_mean
from .reference_sim import simulate_reference
from .solver import DERIVED_FACTOR, ThresholdTable, build_thresholds
from .strategies import Strategy
from .trace import EmpiricalDelaySource, bootstrap_index

log = logging.getLogger(__name__)

RECORD_HEADER = ["arrival_s", "class", "k", "n", "dq_ms", "ds_ms", "total_ms", "usage_ms"]
DEFAULT_QLEN_BOUND = 1000.0
DEFAULT_MAX_BACKLOG = 20000


class ConfigError(ValueError):
    pass


class SimulationError(RuntimeError):
    pass


@dataclass
class SimConfig:
    L: int
    classes: list[ClassSpec]
    strategy: str = "tofec"
    arrival_rate: float = 0.0
    duration: float = 1000.0
    warmup: float | None = None  # default: 10% of duration
    seed: int = 0
    static_codes: list[CodeChoice] | None = None
    alpha: float = 0.99
    table: ThresholdTable | None = None
    load_factor: float = DERIVED_FACTOR  # used only when the table is built here
    # (segment length s, rate req/s) pairs; overrides arrival_rate/duration
    rate_schedule: list[tuple[float, float]] | None = None
    delay_source: EmpiricalDelaySource | None = None
    qlen_bound: float = DEFAULT_QLEN_BOUND
    max_backlog: int = DEFAULT_MAX_BACKLOG

    def __post_init__(self):
        if self.rate_schedule is not None:
            if not self.rate_schedule:
                raise ConfigError("rate_schedule must not be empty")
            for seg_len, rate in self.rate_schedule:
                if seg_len <= 0 or rate < 0:
                    raise ConfigError(f"bad rate segment ({seg_len}, {rate})")
            self.duration = float(sum(s for s, _ in self.rate_schedule))
        if self.L < 1:
            raise ConfigError("L must be >= 1")
        if self.arrival_rate < 0:
            raise ConfigError("arrival rate must be >= 0")
        if not self.classes:
            raise ConfigError("at least one class is required")
        check_mix(self.classes)
        if self.warmup is None:
            self.warmup = 0.1 * self.duration
        if not self.duration > self.warmup >= 0:
            raise ConfigError(f"need duration > warmup >= 0, got {self.duration}, {self.warmup}")
        if self.static_codes is not None and len(self.static_codes) == 1 and len(self.classes) > 1:
            self.static_codes = self.static_codes * len(self.classes)
        if self.strategy == "tofec":
            if self.table is None:
                self.table = build_thresholds(self.classes, self.L, self.load_factor)
            elif self.table.L != self.L:
                raise ConfigError(f"threshold table built for L={self.table.L}, simulation uses L={self.L}")
        # validates strategy kind and static codes
        self.make_strategy()
        if self.delay_source is not None:
            for cls in self.classes:
                for k in range(1, cls.k_max + 1):
                    self.delay_source.bucket(cls.op_type, cls.chunk_size(k))

    @property
    def schedule(self) -> list[tuple[float, float]]:
        return self.rate_schedule or [(self.duration, self.arrival_rate)]

    @property
    def n_cap(self) -> int:
        return max(c.n_max for c in self.classes)

    @property
    def k_cap(self) -> int:
        return max(c.k_max for c in self.classes)

    def make_strategy(self) -> Strategy:
        return Strategy(
            self.strategy,
            self.classes,
            static_codes=self.static_codes,
            table=self.table,
            alpha=self.alpha,
        )


def draw_inputs(cfg: SimConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Arrival times, class indices and per-task uniforms, all from one seeded stream."""
    rng = np.random.default_rng(cfg.seed)
    parts, start = [], 0.0
    for seg_len, rate in cfg.schedule:
        count = rng.poisson(rate * seg_len) if rate > 0 else 0
        parts.append(start + np.sort(rng.uniform(0.0, seg_len, count)))
        start += seg_len
    arrivals = np.concatenate(parts) if parts else np.empty(0)
    cdf = np.cumsum([c.mix_fraction for c in cfg.classes])
    cls_u = rng.random(len(arrivals))
    cls_idx = np.minimum(np.searchsorted(cdf, cls_u, side="right"), len(cfg.classes) - 1)
    task_u = rng.random((len(arrivals), cfg.n_cap))
    return arrivals, cls_idx.astype(np.int64), task_u


def _delay_tables(cfg: SimConfig):
    C, K = len(cfg.classes), cfg.k_cap + 1
    shift_tab = np.zeros((C, K))
    tail_tab = np.zeros((C, K))
    boff = np.zeros((C, K), np.int64)
    blen = np.ones((C, K), np.int64)
    chunks = []
    offset = 0
    for c, cls in enumerate(cfg.classes):
        for k in range(1, cls.k_max + 1):
            b = cls.chunk_size(k)
            shift_tab[c, k] = shift(cls.params, b)
            tail_tab[c, k] = tail_mean(cls.params, b)
            if cfg.delay_source is not None:
                vals = cfg.delay_source.bucket(cls.op_type, b)
                chunks.append(vals)
                boff[c, k] = offset
                blen[c, k] = len(vals)
                offset += len(vals)
    bvals = np.concatenate(chunks) if chunks else np.zeros(1)
    return shift_tab, tail_tab, bvals, boff, blen


def _threshold_arrays(cfg: SimConfig):
    C = len(cfg.classes)
    zmax = cfg.n_cap + 1
    kmax = cfg.k_cap + 1
    zeta = np.zeros((C, zmax))
    kappa = np.zeros((C, kmax))
    zlen = np.full(C, 2, np.int64)
    klen = np.full(C, 2, np.int64)
    zeta[:, 0] = np.inf
    kappa[:, 0] = np.inf
    if cfg.table is not None:
        for c, ct in enumerate(cfg.table.classes):
            zeta[c, : len(ct.zeta)] = ct.zeta
            kappa[c, : len(ct.kappa)] = ct.kappa
            zlen[c], klen[c] = len(ct.zeta), len(ct.kappa)
    return zeta, zlen, kappa, klen


@dataclass
class SimReport:
    """Per-request records (arrival order) plus post-warmup aggregates."""

    arrival: np.ndarray
    cls: np.ndarray
    n: np.ndarray
    k: np.ndarray
    queue_length: np.ndarray
    idle_threads: np.ndarray
    admitted: np.ndarray
    done: np.ndarray
    usage: np.ndarray
    warmup: float
    duration: float
    aborted: bool = False
    qlen_bound: float = DEFAULT_QLEN_BOUND
    aggregates: dict = field(default_factory=dict)

    def __post_init__(self):
        self.aggregates = self._aggregate()

    @property
    def dq(self) -> np.ndarray:
        return self.admitted - self.arrival

    @property
    def ds(self) -> np.ndarray:
        return self.done - self.admitted

    @property
    def total(self) -> np.ndarray:
        return self.done - self.arrival

    def measured(self) -> np.ndarray:
        """Mask of completed requests that arrived after warmup."""
        return (self.arrival >= self.warmup) & np.isfinite(self.done)

    def _aggregate(self) -> dict:
        m = self.measured()
        total = np.sort(self.total[m])
        after = self.arrival >= self.warmup
        q = self.queue_length[after].astype(float)
        t_after = self.arrival[after]
        agg = {
            "requests": int(m.sum()),
            "arrivals": int(len(self.arrival)),
            "aborted": bool(self.aborted),
        }
        if len(total):
            agg.update(
                mean_ms=1e3 * float(total.mean()),
                median_ms=1e3 * nearest_rank(total, 50),
                p90_ms=1e3 * nearest_rank(total, 90),
                p99_ms=1e3 * nearest_rank(total, 99),
                std_ms=1e3 * float(total.std()),
                mean_dq_ms=1e3 * float(self.dq[m].mean()),
                mean_ds_ms=1e3 * float(self.ds[m].mean()),
                mean_usage_ms=1e3 * float(self.usage[m].mean()),
            )
        else:
            agg.update({key: math.nan for key in (
                "mean_ms", "median_ms", "p90_ms", "p99_ms", "std_ms",
                "mean_dq_ms", "mean_ds_ms", "mean_usage_ms")})
        agg["mean_queue_length"] = float(q.mean()) if len(q) else 0.0
        windows = window_means(t_after, q, self.warmup, self.duration, 4)
        agg["window_queue_lengths"] = windows
        last = windows[-1] if windows else 0.0
        agg["last_quarter_queue_length"] = last
        agg["queue_trend_increasing"] = bool(
            len(windows) > 1 and all(b > a for a, b in zip(windows, windows[1:]))
        )
        agg["unstable"] = bool(self.aborted or last >= self.qlen_bound)
        window = self.duration - self.warmup
        finished = np.isfinite(self.done) & (self.done >= self.warmup) & (self.done < self.duration)
        agg["throughput"] = float(finished.sum() / window)
        ks = self.k[m]
        agg["composition"] = {
            str(int(kv)): float(np.mean(ks == kv)) for kv in np.unique(ks)
        } if len(ks) else {}
        return agg

    def to_json(self) -> dict:
        return _jsonable(self.aggregates)

    def write_records_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_HEADER)
        dq, ds, total = self.dq, self.ds, self.total
        for i in range(len(self.arrival)):
            w.writerow([
                repr(float(self.arrival[i])), int(self.cls[i]), int(self.k[i]), int(self.n[i]),
                _ms(dq[i]), _ms(ds[i]), _ms(total[i]), _ms(self.usage[i]),
            ])

    def records_csv(self) -> str:
        buf = io.StringIO()
        self.write_records_csv(buf)
        return buf.getvalue()


def _ms(x: float) -> str:
    return repr(float(x) * 1e3) if math.isfinite(x) else "nan"


def _jsonable(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def nearest_rank(sorted_values: np.ndarray, pct: float) -> float:
    n = len(sorted_values)
    if n == 0:
        return math.nan
    rank = max(1, math.ceil(pct / 100.0 * n))
    return float(sorted_values[rank - 1])


def window_means(times: np.ndarray, values: np.ndarray, start: float, end: float, count: int) -> list[float]:
    edges = np.linspace(start, end, count + 1)
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (times >= a) & (times < b)
        if sel.any():
            out.append(float(values[sel].mean()))
    return out


def run_simulation(cfg: SimConfig) -> SimReport:
    arrivals, cls_idx, task_u = draw_inputs(cfg)
    kind = {"static": _kernel.STATIC, "tofec": _kernel.TOFEC, "greedy": _kernel.GREEDY}[cfg.strategy]
    C = len(cfg.classes)
    static_n = np.ones(C, np.int64)
    static_k = np.ones(C, np.int64)
    if cfg.static_codes is not None:
        static_n[:] = [c.n for c in cfg.static_codes]
        static_k[:] = [c.k for c in cfg.static_codes]
    zeta, zlen, kappa, klen = _threshold_arrays(cfg)
    shift_tab, tail_tab, bvals, boff, blen = _delay_tables(cfg)
    out = _kernel.run_kernel(
        arrivals, cls_idx, task_u, cfg.L,
        kind, static_n, static_k, float(cfg.alpha),
        zeta, zlen, kappa, klen,
        np.array([c.n_max for c in cfg.classes], np.int64),
        np.array([c.k_max for c in cfg.classes], np.int64),
        np.array([float(c.r_max) for c in cfg.classes]),
        shift_tab, tail_tab, cfg.delay_source is not None, bvals, boff, blen,
        int(cfg.max_backlog),
    )
    n_arr, k_arr, q_arr, l_arr, t_admit, t_done, usage, n_in, status = out
    if status < 0:
        raise SimulationError("non-finite task delay sampled")
    aborted = status == _kernel.ABORTED
    if aborted:
        log.info("simulation aborted: backlog exceeded %d requests", cfg.max_backlog)
    sl = slice(0, int(n_in))
    return SimReport(
        arrival=arrivals[sl], cls=cls_idx[sl], n=n_arr[sl], k=k_arr[sl],
        queue_length=q_arr[sl], idle_threads=l_arr[sl],
        admitted=t_admit[sl], done=t_done[sl], usage=usage[sl],
        warmup=float(cfg.warmup), duration=float(cfg.duration),
        aborted=bool(aborted), qlen_bound=cfg.qlen_bound,
    )


def run_reference(cfg: SimConfig):
    """Same inputs through the pure-Python loop; returns (report, requests, trace)."""
    arrivals, cls_idx, task_u = draw_inputs(cfg)
    shift_tab, tail_tab, bvals, boff, blen = _delay_tables(cfg)
    use_trace = cfg.delay_source is not None

    def delay_fn(c, k, u):
        if use_trace:
            return float(bvals[boff[c, k] + bootstrap_index(u, int(blen[c, k]))])
        return float(shift_tab[c, k]) + float(tail_tab[c, k]) * -math.log1p(-u)

    requests, trace = simulate_reference(arrivals, cls_idx, task_u, cfg.L, cfg.make_strategy(), delay_fn)
    report = SimReport(
        arrival=arrivals,
        cls=cls_idx,
        n=np.array([r.n for r in requests], np.int64),
        k=np.array([r.k for r in requests], np.int64),
        queue_length=np.array([r.queue_length for r in requests], np.int64),
        idle_threads=np.array([r.idle_threads for r in requests], np.int64),
        admitted=np.array([r.admitted for r in requests]),
        done=np.array([r.done for r in requests]),
        usage=np.array([r.usage for r in requests]),
        warmup=float(cfg.warmup), duration=float(cfg.duration), qlen_bound=cfg.qlen_bound,
    )
    return report, requests, trace


@dataclass(frozen=True)
class CapacityResult:
    simulated: float
    analytic: float | None
    probes: tuple[tuple[float, bool], ...]


def with_rate(cfg: SimConfig, rate: float, n_requests: int | None = None) -> SimConfig:
    """Copy of `cfg` at a constant arrival rate; duration sized for `n_requests` if given."""
    duration = cfg.duration
    if n_requests is not None and rate > 0:
        duration = n_requests / rate
    frac = cfg.warmup / cfg.duration
    return SimConfig(
        L=cfg.L, classes=cfg.classes, strategy=cfg.strategy, arrival_rate=rate,
        duration=duration, warmup=frac * duration, seed=cfg.seed,
        static_codes=cfg.static_codes, alpha=cfg.alpha, table=cfg.table,
        load_factor=cfg.load_factor, delay_source=cfg.delay_source, qlen_bound=cfg.qlen_bound, max_backlog=cfg.max_backlog,
    )


def is_stable(cfg: SimConfig, rate: float, n_requests: int) -> bool:
    if rate <= 0:
        return True
    return not run_simulation(with_rate(cfg, rate, n_requests)).aggregates["unstable"]


def capacity_estimate(
    cfg: SimConfig, n_requests: int = 50_000, rel_tol: float = 0.005, start: float | None = None
) -> CapacityResult:
    """Largest stable arrival rate found by bracketing and bisection.

    A rate counts as stable when the run is not aborted and the mean queue
    length seen by arrivals in the last quarter stays below ``cfg.qlen_bound``.
    """
    analytic = None
    if cfg.strategy == "static":
        analytic = analytic_capacity(cfg.classes, cfg.static_codes, cfg.L)
    if start is None:
        base = [CodeChoice(1, 1)] * len(cfg.classes)
        start = analytic if analytic is not None else analytic_capacity(cfg.classes, base, cfg.L)
    probes = []
    lo, hi = 0.0, start
    while True:
        stable = is_stable(cfg, hi, n_requests)
        probes.append((hi, stable))
        if not stable:
            break
        lo, hi = hi, hi * 1.5
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        stable = is_stable(cfg, mid, n_requests)
        probes.append((mid, stable))
        if stable:
            lo = mid
        else:
            hi = mid
    return CapacityResult(simulated=lo, analytic=analytic, probes=tuple(probes))


def static_config(base: SimConfig, code: CodeChoice | Sequence[CodeChoice]) -> SimConfig:
    codes = [code] if isinstance(code, CodeChoice) else list(code)
    return SimConfig(
        L=base.L, classes=base.classes, strategy="static", arrival_rate=base.arrival_rate,
        duration=base.duration, warmup=base.warmup, seed=base.seed, static_codes=codes,
        alpha=base.alpha, rate_schedule=base.rate_schedule, delay_source=base.delay_source,
        qlen_bound=base.qlen_bound, max_backlog=base.max_backlog,
    )
