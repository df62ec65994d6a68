"""Closed-form delay, usage and queueing approximations for static codes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .delay_model import DelayParams, shift, tail_mean


@dataclass(frozen=True)
class CodeChoice:
    n: int
    k: int

    def __post_init__(self):
        if not (isinstance(self.n, int) and isinstance(self.k, int)):
            raise TypeError(f"n, k must be int, got {self.n!r}, {self.k!r}")
        if not self.n >= self.k >= 1:
            raise ValueError(f"need n >= k >= 1, got ({self.n}, {self.k})")

    @property
    def r(self) -> float:
        return self.n / self.k

    def __iter__(self):
        return iter((self.n, self.k))


@dataclass(frozen=True)
class ClassSpec:
    """A request class: operation type, file size and code limits."""

    op_type: str
    file_size: float  # MB
    mix_fraction: float
    k_max: int
    n_max: int
    r_max: float
    params: DelayParams

    def __post_init__(self):
        if self.op_type not in ("read", "write"):
            raise ValueError(f"unknown op_type {self.op_type!r}")
        if not self.file_size > 0:
            raise ValueError("file_size must be > 0")
        if not 0.0 <= self.mix_fraction <= 1.0:
            raise ValueError("mix_fraction must lie in [0, 1]")
        if not self.n_max >= self.k_max >= 1:
            raise ValueError(f"need n_max >= k_max >= 1, got {self.n_max}, {self.k_max}")
        if not self.r_max >= 1:
            raise ValueError("r_max must be >= 1")

    def chunk_size(self, k: float) -> float:
        return self.file_size / k

    def max_n_for(self, k: int) -> int:
        return min(self.n_max, int(math.floor(self.r_max * k + 1e-9)))

    def allowed_codes(self) -> list[CodeChoice]:
        """Every integer code within the class limits (k <= n <= min(n_max, r_max k))."""
        return [
            CodeChoice(n, k)
            for k in range(1, self.k_max + 1)
            for n in range(k, self.max_n_for(k) + 1)
        ]


@dataclass(frozen=True)
class LoadPoint:
    arrival_rate: float
    L: int

    def __post_init__(self):
        if self.arrival_rate < 0:
            raise ValueError("arrival rate must be >= 0")
        if self.L < 1:
            raise ValueError("L must be >= 1")


def check_mix(classes: Sequence[ClassSpec]) -> None:
    total = sum(c.mix_fraction for c in classes)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"class mix fractions sum to {total}, expected 1")


def _check_code(cls: ClassSpec, code: CodeChoice) -> None:
    if code.k > cls.k_max:
        raise ValueError(f"k={code.k} exceeds k_max={cls.k_max}")


def harmonic_tail(n: int, k: int) -> float:
    """Sum_{j=0}^{k-1} 1/(n-j): expected k-th order statistic of n unit exponentials."""
    return math.fsum(1.0 / (n - j) for j in range(k))


def expected_service_delay_exact(cls: ClassSpec, code: CodeChoice) -> float:
    _check_code(cls, code)
    b = cls.chunk_size(code.k)
    return shift(cls.params, b) + tail_mean(cls.params, b) * harmonic_tail(code.n, code.k)


def expected_service_delay_approx(cls: ClassSpec, code: CodeChoice) -> float:
    """Log approximation of the harmonic sum; only defined for r > 1."""
    _check_code(cls, code)
    if code.n == code.k:
        raise ValueError("approximation undefined at r=1; use exact form")
    b = cls.chunk_size(code.k)
    r = code.r
    return shift(cls.params, b) + tail_mean(cls.params, b) * math.log(r / (r - 1.0))


def expected_usage(cls: ClassSpec, code: CodeChoice) -> float:
    """Expected thread-seconds per request when all n tasks start together."""
    _check_code(cls, code)
    b = cls.chunk_size(code.k)
    return code.n * shift(cls.params, b) + code.k * tail_mean(cls.params, b)


def expected_usage_expanded(cls: ClassSpec, k: float, r: float) -> float:
    """Same quantity written in (k, r); accepts relaxed real values."""
    p, J = cls.params, cls.file_size
    return p.fixed_shift * k * r + p.shift_slope * J * r + p.fixed_tail * k + p.tail_slope * J


def mean_usage(classes: Sequence[ClassSpec], codes: Sequence[CodeChoice]) -> float:
    if len(classes) != len(codes):
        raise ValueError("one code per class required")
    return math.fsum(c.mix_fraction * expected_usage(c, code) for c, code in zip(classes, codes))


def normalized_load(load: LoadPoint, classes: Sequence[ClassSpec], codes: Sequence[CodeChoice]) -> float:
    return load.arrival_rate * mean_usage(classes, codes)


def expected_queue_length(rho: float, L: int) -> float:
    if rho < 0:
        raise ValueError("normalized load must be >= 0")
    if rho >= L:
        raise ValueError("unstable: normalized load exceeds thread count")
    return rho * rho / (L * (L - rho))


def expected_queueing_delay(arrival_rate: float, usage: float, L: int) -> float:
    """M/M/1 waiting time with service rate L/usage."""
    rho = arrival_rate * usage
    if rho >= L:
        raise ValueError("unstable: normalized load exceeds thread count")
    return arrival_rate * usage * usage / (L * (L - rho))


def load_from_queue_length(Q: float, L: int) -> float:
    """Inverse of `expected_queue_length` in its first argument."""
    if Q < 0:
        raise ValueError("queue length must be >= 0")
    return L * _free_fraction_complement(Q)


def _free_fraction_complement(Q: float) -> float:
    # (sqrt(Q^2+4Q) - Q)/2, written to stay accurate for tiny and huge Q
    return 2.0 * Q / (Q + math.sqrt(Q * Q + 4.0 * Q)) if Q > 0 else 0.0


def idle_fraction(Q: float) -> float:
    """1 - rho/L as a function of Q, without cancellation for large Q."""
    return 2.0 / (2.0 + Q + math.sqrt(Q * Q + 4.0 * Q))


def analytic_capacity(classes: Sequence[ClassSpec], codes: Sequence[CodeChoice], L: int) -> float:
    """Arrival rate at which the normalized load reaches L."""
    return L / mean_usage(classes, codes)
