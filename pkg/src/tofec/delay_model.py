"""Shifted-exponential task delay model.

A task moving a chunk of ``B`` MB takes ``shift(B) + Exp(mean=tail_mean(B))``
seconds, where both the shift and the tail mean are affine in ``B``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

JSON_KEYS = {
    "fixed_shift": "fixed_shift_s",
    "shift_slope": "shift_slope_s_per_mb",
    "fixed_tail": "fixed_tail_s",
    "tail_slope": "tail_slope_s_per_mb",
}


@dataclass(frozen=True)
class DelayParams:
    """Coefficients of the shifted-exponential model (seconds, seconds/MB)."""

    fixed_shift: float
    shift_slope: float
    fixed_tail: float
    tail_slope: float

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
        if self.fixed_shift + self.fixed_tail <= 0:
            raise ValueError("fixed_shift + fixed_tail must be > 0 (zero-delay model)")

    def to_json(self) -> dict:
        return {JSON_KEYS[k]: v for k, v in asdict(self).items()}

    @classmethod
    def from_json(cls, doc: dict) -> "DelayParams":
        expected = set(JSON_KEYS.values())
        keys = set(doc)
        if keys != expected:
            missing = sorted(expected - keys)
            unknown = sorted(keys - expected)
            raise ValueError(f"bad delay params: missing={missing} unknown={unknown}")
        return cls(**{k: float(doc[v]) for k, v in JSON_KEYS.items()})


def _check_chunk(chunk_mb: float) -> float:
    if not chunk_mb > 0:
        raise ValueError(f"chunk size must be > 0 MB, got {chunk_mb!r}")
    return chunk_mb


def shift(params: DelayParams, chunk_mb: float) -> float:
    """Deterministic lower bound of a task delay for a chunk of `chunk_mb` MB."""
    return params.fixed_shift + params.shift_slope * _check_chunk(chunk_mb)


def tail_mean(params: DelayParams, chunk_mb: float) -> float:
    """Mean (and std) of the exponential tail, i.e. ``1/mu(B)``."""
    return params.fixed_tail + params.tail_slope * _check_chunk(chunk_mb)


def mean_task_delay(params: DelayParams, chunk_mb: float) -> float:
    return shift(params, chunk_mb) + tail_mean(params, chunk_mb)


def delay_from_uniform(shift_s: float, tail_s: float, u: float) -> float:
    # inverse CDF of the exponential; u in [0, 1)
    return shift_s + tail_s * -math.log1p(-u)


def sample_task_delay(params: DelayParams, chunk_mb: float, rng: np.random.Generator) -> float:
    """Draw one task delay using a single uniform from `rng`."""
    return delay_from_uniform(shift(params, chunk_mb), tail_mean(params, chunk_mb), rng.random())


def sample_task_delays(
    params: DelayParams, chunk_mb: float, rng: np.random.Generator, size: int
) -> np.ndarray:
    """Vectorised `sample_task_delay`; consumes the same uniforms in the same order."""
    u = rng.random(size)
    return shift(params, chunk_mb) + tail_mean(params, chunk_mb) * -np.log1p(-u)


# Synthetic stand-in for S3-like behaviour: positive intercepts, linear growth in
# chunk size. Chosen so a 3 MB (1,1) read averages 205 ms. Not fitted from real traces.
S3_LIKE = DelayParams(fixed_shift=0.035, shift_slope=0.008, fixed_tail=0.05, tail_slope=0.032)
