"""Optimal relaxed codes as functions of the expected request-queue length.

For one class the optimality conditions of the static problem reduce to

* a code equation linking k and r that only involves the delay parameters and
  the file size (``code_lhs(k) == code_rhs(r)``), and
* a load equation ``((L/(L-rho))**2 - 1) / (c L) == pi(k)``, where ``pi`` is
  evaluated on the code-equation curve and is strictly decreasing.

Differentiating the objective gives ``c = 1`` (`DERIVED_FACTOR`); the
commonly quoted form of the condition carries ``c = 2`` (`PRINTED_FACTOR`).
Both are supported through the `load_factor` argument.

Since ``rho`` is a function of the expected queue length ``Q``, solving both
gives ``K(Q)``, ``R(Q)`` and ``N(Q) = K(Q) R(Q)``. Inverting ``N`` and ``K`` at
integer points yields the queue-length thresholds used by the adaptive policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .analysis import ClassSpec, expected_queue_length, idle_fraction

MAX_ITER = 200
REL_TOL = 1e-15
R_MAX_BRACKET = 1e6
S_MIN_BRACKET = 1e-300
K_MIN, K_MAX = 1e-3, 1e3
K_FLOOR = 1e-12
Q_MIN, Q_MAX = 1e-9, 1e9
DERIVED_FACTOR = 1.0
PRINTED_FACTOR = 2.0


class SolverError(RuntimeError):
    pass


def log_root(f: Callable[[float], float], lo: float, hi: float) -> float:
    """Root of a monotone `f` on ``[lo, hi]`` (both > 0), found by Brent's method on ``log x``.

    The log-space tolerance makes the result accurate to ``REL_TOL`` relative.
    """
    t = brentq(lambda t: f(math.exp(t)), math.log(lo), math.log(hi),
               xtol=REL_TOL, rtol=4 * np.finfo(float).eps, maxiter=MAX_ITER)
    return math.exp(t)


def code_lhs(cls: ClassSpec, k: float) -> float:
    p, J = cls.params, cls.file_size
    denom = p.fixed_shift * k + p.shift_slope * J
    if denom <= 0:
        raise SolverError("code equation undefined: fixed_shift and shift_slope are both 0")
    return k * (p.fixed_tail * k + p.tail_slope * J) / denom


def code_rhs_s(cls: ClassSpec, s: float) -> float:
    """Right-hand side of the code equation at ``r = 1 + s``."""
    p, J = cls.params, cls.file_size
    r = 1.0 + s
    return J * r * s / (p.fixed_shift * r + p.fixed_tail) * (p.shift_slope + p.tail_slope * math.log1p(1.0 / s))


def code_rhs(cls: ClassSpec, r: float) -> float:
    return code_rhs_s(cls, r - 1.0)


def code_residual(cls: ClassSpec, k: float, r: float) -> float:
    """Relative residual of the code equation at (k, r)."""
    lhs = code_lhs(cls, k)
    return abs(lhs - code_rhs(cls, r)) / lhs


def _solve_s(cls: ClassSpec, k: float) -> float:
    if not k > 0:
        raise ValueError(f"k must be > 0, got {k!r}")
    p = cls.params
    if p.shift_slope == 0 and p.tail_slope == 0:
        raise SolverError("no root found; check parameters (shift_slope and tail_slope are both 0)")
    target = code_lhs(cls, k)
    g = lambda s: code_rhs_s(cls, s) - target  # noqa: E731
    hi = 1.0
    while g(hi) < 0:
        hi *= 2.0
        if hi > R_MAX_BRACKET:
            raise SolverError("no root found; check parameters")
    lo = min(1e-9, hi / 2)
    while g(lo) > 0:
        lo *= 1e-3
        if lo < S_MIN_BRACKET:
            raise SolverError("no root found; check parameters")
    return log_root(g, lo, hi)


def solve_r_given_k(cls: ClassSpec, k: float) -> float:
    """Unique r > 1 on the optimal-code curve for a (relaxed) dimension k."""
    return 1.0 + _solve_s(cls, k)


def _pi_from_s(cls: ClassSpec, k: float, s: float) -> float:
    p, J = cls.params, cls.file_size
    return (p.fixed_tail * k + p.tail_slope * J) / (
        k * (1.0 + s) * s * (p.fixed_shift * k + p.shift_slope * J)
    )


def pi(cls: ClassSpec, k: float) -> float:
    """Load-equation right-hand side along the code curve, with the ``c L`` factor removed."""
    return _pi_from_s(cls, k, _solve_s(cls, k))


def load_target(Q: float, L: int, load_factor: float = DERIVED_FACTOR) -> float:
    """Load-equation left-hand side divided by ``c L``, expressed through Q."""
    if not Q > 0:
        raise SolverError("Q must be > 0 (Q = 0 leaves k unbounded)")
    inv_idle = 1.0 / idle_fraction(Q)
    return (inv_idle * inv_idle - 1.0) / (load_factor * L)


def load_residual(
    cls: ClassSpec, Q: float, L: int, k: float, r: float, load_factor: float = DERIVED_FACTOR
) -> float:
    """Relative residual of the load equation at (k, r) for queue length Q."""
    lhs = (1.0 / idle_fraction(Q)) ** 2 - 1.0
    p, J = cls.params, cls.file_size
    rhs = load_factor * L * (p.fixed_tail * k + p.tail_slope * J) / (
        k * r * (r - 1.0) * (p.fixed_shift * k + p.shift_slope * J)
    )
    return abs(lhs - rhs) / lhs


def queue_length_for_target(target: float, L: int, load_factor: float = DERIVED_FACTOR) -> float:
    """Inverse of `load_target`: the Q whose load target equals `target`."""
    if not target > 0:
        raise SolverError("target must be > 0")
    x = 1.0 - 1.0 / math.sqrt(1.0 + load_factor * L * target)  # rho / L
    return expected_queue_length(L * x, L)


@dataclass(frozen=True)
class OptimalCode:
    k: float
    r: float
    n: float


def optimal_code_for_Q(
    cls: ClassSpec, Q: float, L: int, load_factor: float = DERIVED_FACTOR
) -> OptimalCode:
    """Relaxed optimal (k, r, n) for a class when the expected queue length is Q."""
    target = load_target(Q, L, load_factor)
    g = lambda k: pi(cls, k) - target  # noqa: E731
    lo, hi = K_MIN, 1.0
    while g(hi) > 0:
        hi *= 2.0
        if hi > K_MAX:
            raise SolverError(f"Q below solvable range (Q={Q:g} needs k > {K_MAX:g})")
    while g(lo) < 0:
        lo /= 2.0
        if lo < K_FLOOR:
            raise SolverError(f"Q above solvable range (Q={Q:g} needs k < {K_FLOOR:g})")
    k = log_root(g, lo, hi)
    r = solve_r_given_k(cls, k)
    return OptimalCode(k=k, r=r, n=k * r)


def _k_for_length(cls: ClassSpec, n: float) -> float:
    """k on the code curve with k * r(k) == n (k r(k) is increasing in k)."""
    g = lambda k: k * solve_r_given_k(cls, k) - n  # noqa: E731
    lo, hi = min(K_MIN, n / 4), max(1.0, n)
    while g(hi) < 0:
        hi *= 2.0
        if hi > K_MAX:
            raise SolverError(f"length {n} unreachable below k = {K_MAX:g}")
    while g(lo) > 0:
        lo /= 2.0
        if lo < K_FLOOR:
            raise SolverError(f"length {n} unreachable above k = {K_FLOOR:g}")
    return log_root(g, lo, hi)


def queue_length_for_dimension(
    cls: ClassSpec, k: float, L: int, load_factor: float = DERIVED_FACTOR
) -> float:
    """``K^{-1}(k)``: the expected queue length at which k is optimal."""
    return queue_length_for_target(pi(cls, k), L, load_factor)


def queue_length_for_length(
    cls: ClassSpec, n: float, L: int, load_factor: float = DERIVED_FACTOR
) -> float:
    """``N^{-1}(n)``."""
    return queue_length_for_dimension(cls, _k_for_length(cls, n), L, load_factor)


@dataclass(frozen=True)
class ClassThresholds:
    """Thresholds for one class, 0-based: ``zeta[j]`` is zeta_{j+1} in 1-based notation.

    ``zeta[0] = inf`` and ``zeta[-1] = 0``; n is chosen as the index j+1 with
    ``zeta[j+1] <= q < zeta[j]``. ``q_n[j]`` is the anchor queue length for
    n = j+1. `kappa` / `q_k` are the same for k.
    """

    zeta: tuple[float, ...]
    kappa: tuple[float, ...]
    q_n: tuple[float, ...]
    q_k: tuple[float, ...]
    truncations: tuple[str, ...] = ()

    @property
    def n_levels(self) -> int:
        return len(self.zeta) - 1

    @property
    def k_levels(self) -> int:
        return len(self.kappa) - 1

    def to_json(self) -> dict:
        enc = lambda xs: ["inf" if math.isinf(x) else x for x in xs]  # noqa: E731
        return {
            "zeta": enc(self.zeta),
            "kappa": enc(self.kappa),
            "q_n": list(self.q_n),
            "q_k": list(self.q_k),
            "truncations": list(self.truncations),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ClassThresholds":
        dec = lambda xs: tuple(math.inf if x == "inf" else float(x) for x in xs)  # noqa: E731
        return cls(
            zeta=dec(doc["zeta"]),
            kappa=dec(doc["kappa"]),
            q_n=tuple(map(float, doc["q_n"])),
            q_k=tuple(map(float, doc["q_k"])),
            truncations=tuple(doc.get("truncations", ())),
        )


@dataclass(frozen=True)
class ThresholdTable:
    L: int
    classes: tuple[ClassThresholds, ...] = field(default_factory=tuple)
    load_factor: float = DERIVED_FACTOR

    def to_json(self) -> dict:
        return {
            "L": self.L,
            "load_factor": self.load_factor,
            "classes": [c.to_json() for c in self.classes],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ThresholdTable":
        return cls(
            L=int(doc["L"]),
            classes=tuple(ClassThresholds.from_json(c) for c in doc["classes"]),
            load_factor=float(doc.get("load_factor", DERIVED_FACTOR)),
        )


def _anchors(inverse: Callable[[float], float], top: int, label: str) -> tuple[list[float], list[str]]:
    anchors, notes = [], []
    for v in range(1, top + 1):
        try:
            q = inverse(float(v))
        except SolverError as exc:
            notes.append(f"{label}={v}: {exc}")
            break
        if not Q_MIN <= q <= Q_MAX:
            notes.append(f"{label}={v}: anchor Q={q:g} outside [{Q_MIN:g}, {Q_MAX:g}]")
            break
        if anchors and not q < anchors[-1]:
            raise SolverError(
                f"anchor queue lengths not strictly decreasing at {label}={v} "
                f"({q:g} >= {anchors[-1]:g}); monotonicity assumption violated"
            )
        anchors.append(q)
    if not anchors:
        raise SolverError(f"no solvable {label} anchor: {'; '.join(notes)}")
    return anchors, notes


def _midpoints(anchors: Sequence[float]) -> tuple[float, ...]:
    inner = [(anchors[j] + anchors[j - 1]) / 2.0 for j in range(1, len(anchors))]
    return (math.inf, *inner, 0.0)


def build_class_thresholds(
    cls: ClassSpec, L: int, load_factor: float = DERIVED_FACTOR
) -> ClassThresholds:
    """Anchor queue lengths at integer n and k, and midpoint thresholds between them.

    Anchors are found by composing inverses: k on the code curve with
    ``k r(k) = n`` (or k itself), then the Q whose load target equals pi(k).
    """
    q_n, notes_n = _anchors(lambda n: queue_length_for_length(cls, n, L, load_factor), cls.n_max, "n")
    q_k, notes_k = _anchors(lambda k: queue_length_for_dimension(cls, k, L, load_factor), cls.k_max, "k")
    return ClassThresholds(
        zeta=_midpoints(q_n),
        kappa=_midpoints(q_k),
        q_n=tuple(q_n),
        q_k=tuple(q_k),
        truncations=tuple(notes_n + notes_k),
    )


def build_thresholds(
    classes: Sequence[ClassSpec] | ClassSpec, L: int, load_factor: float = DERIVED_FACTOR
) -> ThresholdTable:
    if isinstance(classes, ClassSpec):
        classes = [classes]
    if load_factor <= 0:
        raise ValueError("load_factor must be > 0")
    return ThresholdTable(
        L=L,
        classes=tuple(build_class_thresholds(c, L, load_factor) for c in classes),
        load_factor=load_factor,
    )
