"""Code-selection policies: static, backlog-adaptive (TOFEC) and greedy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .analysis import ClassSpec, CodeChoice
from .solver import ClassThresholds, ThresholdTable

STRATEGIES = ("static", "tofec", "greedy")


@dataclass(frozen=True)
class ArrivalContext:
    queue_length: int  # requests waiting in the request queue, excluding the arrival
    idle_threads: int
    class_index: int = 0


@dataclass
class TofecState:
    """Smoothed backlog shared by all classes of one simulation."""

    alpha: float = 0.99
    q_bar: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha!r}")
        if self.q_bar < 0:
            raise ValueError("q_bar must be >= 0")

    def update(self, q: float) -> float:
        self.q_bar = self.alpha * q + (1.0 - self.alpha) * self.q_bar
        return self.q_bar


def threshold_index(thresholds: Sequence[float], q_bar: float) -> int:
    """1-based index j with ``thresholds[j] <= q_bar < thresholds[j-1]`` (0-based storage)."""
    # thresholds[0] is inf, so the count is at least 1
    return sum(1 for t in thresholds[:-1] if q_bar < t)


def _clamp_n(n: int, k: int, cls: ClassSpec) -> int:
    n = min(int(math.floor(cls.r_max * k + 1e-9)), n)
    return max(n, k)


def tofec_choose(
    state: TofecState, ctx: ArrivalContext, table: ClassThresholds, cls: ClassSpec
) -> CodeChoice:
    q_bar = state.update(ctx.queue_length)
    k = min(threshold_index(table.kappa, q_bar), cls.k_max)
    n = min(threshold_index(table.zeta, q_bar), cls.n_max)
    return CodeChoice(_clamp_n(n, k, cls), k)


def greedy_choose(ctx: ArrivalContext, cls: ClassSpec) -> CodeChoice:
    """Chunk as much as the idle threads allow, then add redundancy with what is left."""
    l = ctx.idle_threads
    if l == 0:
        return CodeChoice(1, 1)
    k = min(cls.k_max, l)
    n = min(int(math.floor(cls.r_max * k + 1e-9)), l)
    return CodeChoice(max(n, k), k)


def static_choose(fixed: CodeChoice) -> CodeChoice:
    return fixed


class Strategy:
    """Bundles a policy with its per-simulation state."""

    def __init__(
        self,
        kind: str,
        classes: Sequence[ClassSpec],
        *,
        static_codes: Sequence[CodeChoice] | None = None,
        table: ThresholdTable | None = None,
        alpha: float = 0.99,
    ):
        if kind not in STRATEGIES:
            raise ValueError(f"unknown strategy {kind!r}; expected one of {STRATEGIES}")
        self.kind = kind
        self.classes = list(classes)
        self.state = TofecState(alpha=alpha)
        self.table = table
        self.static_codes = list(static_codes) if static_codes is not None else None
        if kind == "static":
            if self.static_codes is None or len(self.static_codes) != len(self.classes):
                raise ValueError("static strategy needs one code per class")
            for cls, code in zip(self.classes, self.static_codes):
                if code.k > cls.k_max:
                    raise ValueError(f"static code {tuple(code)} exceeds k_max={cls.k_max}")
        if kind == "tofec":
            if table is None or len(table.classes) != len(self.classes):
                raise ValueError("tofec strategy needs a threshold table with one entry per class")

    def choose(self, ctx: ArrivalContext) -> CodeChoice:
        cls = self.classes[ctx.class_index]
        if self.kind == "static":
            return static_choose(self.static_codes[ctx.class_index])
        if self.kind == "greedy":
            return greedy_choose(ctx, cls)
        return tofec_choose(self.state, ctx, self.table.classes[ctx.class_index], cls)
