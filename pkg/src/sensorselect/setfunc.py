"""Brute-force audits of set-function properties (monotone, submodular, modular).

These enumerate the whole power set, so they are only meant for small
ground sets (``p`` up to about 8).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Iterable

SENTINEL_FLOOR = -1e17


@dataclass(frozen=True)
class Violation:
    kind: str
    small: tuple[int, ...]
    large: tuple[int, ...]
    element: int | None
    lhs: float
    rhs: float


def power_set(p: int) -> list[tuple[int, ...]]:
    return [c for r in range(p + 1) for c in combinations(range(p), r)]


def tabulate(f: Callable[[tuple[int, ...]], float], p: int) -> dict[frozenset, float]:
    return {frozenset(s): f(s) for s in power_set(p)}


def _slack(a: float, b: float, rtol: float, atol: float) -> float:
    return atol + rtol * max(abs(a), abs(b))


def _pairs(table: dict[frozenset, float]) -> Iterable[tuple[frozenset, frozenset]]:
    for small in table:
        for large in table:
            if small <= large:
                yield small, large


def monotonicity_violations(table, rtol=1e-9, atol=1e-12) -> list[Violation]:
    out = []
    for small, large in _pairs(table):
        a, b = table[small], table[large]
        if a > b + _slack(a, b, rtol, atol):
            out.append(Violation("monotone", tuple(sorted(small)), tuple(sorted(large)), None, a, b))
    return out


def submodularity_violations(table, p: int, rtol=1e-9, atol=1e-12, limit=None) -> list[Violation]:
    """Cases where ``f(A+s) - f(A) < f(B+s) - f(B)`` for ``A <= B``, ``s`` not in ``B``."""
    out = []
    ground = frozenset(range(p))
    for small, large in _pairs(table):
        for s in sorted(ground - large):
            gain_small = table[small | {s}] - table[small]
            gain_large = table[large | {s}] - table[large]
            vals = (table[small], table[small | {s}], table[large], table[large | {s}])
            # sentinel values (e.g. log det of a singular matrix) must not inflate the slack
            scale = max([abs(v) for v in vals if v > SENTINEL_FLOOR], default=0.0)
            if gain_small < gain_large - (atol + rtol * scale):
                out.append(
                    Violation(
                        "submodular",
                        tuple(sorted(small)),
                        tuple(sorted(large)),
                        s,
                        gain_small,
                        gain_large,
                    )
                )
                if limit is not None and len(out) >= limit:
                    return out
    return out


def modularity_defects(table, p: int, rtol=1e-9, atol=1e-12) -> list[Violation]:
    """Subsets whose value differs from ``f(empty) + sum of singleton gains``."""
    base = table[frozenset()]
    gains = {q: table[frozenset({q})] - base for q in range(p)}
    out = []
    for subset, value in table.items():
        predicted = base + sum(gains[q] for q in subset)
        if abs(value - predicted) > _slack(value, predicted, rtol, atol):
            out.append(Violation("modular", tuple(sorted(subset)), (), None, value, predicted))
    return out
