"""Task-delay traces: CSV I/O, parameter fitting, and bootstrap replay."""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .delay_model import DelayParams, sample_task_delays

log = logging.getLogger(__name__)

OP_TYPES = ("read", "write")
TRACE_HEADER = ["op_type", "chunk_size_mb", "delay_ms"]
FILTER_FRACTION = 0.1
MIN_BUCKET_SAMPLES = 10


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class TraceRecord:
    op_type: str
    chunk_size: float  # MB
    delay: float  # seconds

    def __post_init__(self):
        if self.op_type not in OP_TYPES:
            raise TraceError(f"unknown op_type {self.op_type!r}")
        if not (math.isfinite(self.chunk_size) and self.chunk_size > 0):
            raise TraceError(f"chunk_size must be > 0, got {self.chunk_size!r}")
        if not (math.isfinite(self.delay) and self.delay > 0):
            raise TraceError(f"delay must be > 0, got {self.delay!r}")


def _size_key(chunk_mb: float) -> float:
    return round(float(chunk_mb), 9)


def load_trace(path) -> list[TraceRecord]:
    """Read a trace CSV (``op_type,chunk_size_mb,delay_ms``); delays come back in seconds."""
    path = Path(path)
    records = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceError(f"{path}: empty trace file")
        if [h.strip() for h in header] != TRACE_HEADER:
            raise TraceError(f"{path}:1: expected header {','.join(TRACE_HEADER)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise TraceError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            op, size, delay = (c.strip() for c in row)
            try:
                records.append(TraceRecord(op, float(size), float(delay) / 1000.0))
            except ValueError as exc:  # TraceError is a ValueError too
                raise TraceError(f"{path}:{lineno}: {exc}") from None
    if not records:
        raise TraceError(f"{path}: trace has no records")
    log.info("loaded %d trace records from %s", len(records), path)
    return records


def write_trace(path, records: Iterable[TraceRecord]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in records:
            w.writerow([r.op_type, repr(r.chunk_size), repr(r.delay * 1000.0)])


def synthesize_trace(
    params: DelayParams,
    chunk_sizes: Sequence[float],
    samples_per_size: int,
    rng: np.random.Generator,
    op_type: str = "read",
) -> list[TraceRecord]:
    """Generate i.i.d. records from the parametric model (test/demo generator)."""
    out = []
    for b in chunk_sizes:
        for d in sample_task_delays(params, b, rng, samples_per_size):
            out.append(TraceRecord(op_type, float(b), float(d)))
    return out


def _group(records: Iterable[TraceRecord], op_type: str) -> dict[float, np.ndarray]:
    buckets = defaultdict(list)
    for r in records:
        if r.op_type == op_type:
            buckets[_size_key(r.chunk_size)].append(r.delay)
    return {b: np.sort(np.asarray(v, dtype=float)) for b, v in sorted(buckets.items())}


def drop_worst(delays: np.ndarray, fraction: float = FILTER_FRACTION) -> np.ndarray:
    """Remove the ``floor(fraction * n)`` largest values."""
    s = np.sort(delays)
    return s[: len(s) - int(math.floor(fraction * len(s)))]


def truncated_exp_moments(kept_fraction: float) -> tuple[float, float]:
    """Mean and std of a unit exponential conditioned below its `kept_fraction` quantile."""
    f = kept_fraction
    if f >= 1.0:
        return 1.0, 1.0
    q = -math.log1p(-f)
    tail = math.exp(-q)
    m1 = (1.0 - tail * (1.0 + q)) / f
    m2 = (2.0 - tail * (q * q + 2.0 * q + 2.0)) / f
    return m1, math.sqrt(max(m2 - m1 * m1, 0.0))


def _line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    return float(intercept), float(slope)


def fit_params(
    records: Sequence[TraceRecord],
    op_type: str = "read",
    filter_fraction: float = FILTER_FRACTION,
    correct_truncation: bool = True,
) -> DelayParams:
    """Fit shifted-exponential coefficients from a trace.

    Per chunk-size bucket the worst `filter_fraction` of delays are dropped, then
    unweighted least-squares lines are fitted through the bucket means and the
    bucket standard deviations. The std line is the exponential tail mean; the
    mean line minus the std line is the shift.

    Dropping the top of an exponential shrinks both moments. With
    `correct_truncation` the bucket statistics are rescaled by the analytic
    moments of an exponential truncated at the kept fraction before the lines
    are fitted, so the fit is unbiased for data that follows the model.
    """
    buckets = _group(records, op_type)
    if len(buckets) < 2:
        raise TraceError(
            f"need >= 2 chunk sizes for op_type {op_type!r}, found {len(buckets)}"
        )
    sizes, means, stds = [], [], []
    for b, delays in buckets.items():
        if len(delays) < MIN_BUCKET_SAMPLES:
            raise TraceError(
                f"chunk size {b} MB has {len(delays)} samples, need >= {MIN_BUCKET_SAMPLES}"
            )
        kept = drop_worst(delays, filter_fraction)
        m, s = float(kept.mean()), float(kept.std(ddof=1))
        if correct_truncation:
            tm, ts = truncated_exp_moments(len(kept) / len(delays))
            tail = s / ts
            m = m + tail * (1.0 - tm)
            s = tail
        sizes.append(b)
        means.append(m)
        stds.append(s)
    x = np.asarray(sizes)
    m0, m1 = _line(x, np.asarray(means))
    e, e_slope = _line(x, np.asarray(stds))
    raw = {
        "fixed_shift": m0 - e,
        "shift_slope": m1 - e_slope,
        "fixed_tail": e,
        "tail_slope": e_slope,
    }
    clean = {}
    for name, value in raw.items():
        if value < 0:
            # tolerate float dust from degenerate traces without a warning
            if value < -1e-12:
                log.warning("fitted %s = %.6g < 0, clamping to 0", name, value)
            value = 0.0
        clean[name] = value
    return DelayParams(**clean)


class EmpiricalDelaySource:
    """Per (op_type, chunk size) sorted delay samples for bootstrap replay."""

    def __init__(self, records: Iterable[TraceRecord]):
        records = list(records)
        self._buckets: dict[tuple[str, float], np.ndarray] = {}
        for op in OP_TYPES:
            for b, delays in _group(records, op).items():
                self._buckets[(op, b)] = delays
        if not self._buckets:
            raise TraceError("empirical source needs at least one record")

    def chunk_sizes(self, op_type: str) -> list[float]:
        return sorted(b for (op, b) in self._buckets if op == op_type)

    def bucket(self, op_type: str, chunk_size: float) -> np.ndarray:
        try:
            return self._buckets[(op_type, _size_key(chunk_size))]
        except KeyError:
            raise TraceError(
                f"no {op_type} samples for chunk size {chunk_size} MB; "
                f"available: {self.chunk_sizes(op_type)}"
            ) from None


def bootstrap_delay(
    source: EmpiricalDelaySource, op_type: str, chunk_size: float, rng: np.random.Generator
) -> float:
    """Uniform draw (with replacement) from the matching trace bucket."""
    values = source.bucket(op_type, chunk_size)
    return float(values[bootstrap_index(rng.random(), len(values))])


def bootstrap_index(u: float, size: int) -> int:
    return min(int(u * size), size - 1)
