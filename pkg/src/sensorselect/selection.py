"""Sensor selection solvers: exhaustive, random and greedy.

All three maximize a Gramian metric over sensor subsets of fixed size and
prefer subsets for which ``(A, C_Q)`` is detectable. When no examined subset
is detectable, the exhaustive and random searches return the best subset
regardless of detectability and say so through ``fallback_used``.

Subsets are 0-based internally; :attr:`SensorSelection.one_based` gives the
1..p labels used in reports.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from functools import cached_property
from itertools import combinations, islice
from typing import Iterator

import numpy as np

from .errors import BudgetExceeded, DimensionMismatch, InvalidArgument
from .numkernel import DEFAULT_TOL, Tolerance, _pbh_detectable, as_matrix, numeric_rank
from .observability import GramianMetric, SubsetScorer, observability_matrix, parse_metric
from .rng import SplitMix64, discrete_uniform_array, trial_state, trial_states
from .sysmodel import LtiSystem

log = logging.getLogger(__name__)

__all__ = [
    "SensorSelection",
    "SelectionProblem",
    "SelectionResult",
    "DEFAULT_CAP",
    "is_observable",
    "is_detectable",
    "growth_estimate",
    "random_trial_count",
    "draw_subset",
    "select_exhaustive",
    "select_random",
    "select_greedy",
]

DEFAULT_CAP = 10**7
_CHUNK = 4096


def is_observable(A, C, tol: Tolerance = DEFAULT_TOL) -> bool:
    A = as_matrix(A, "A")
    C = as_matrix(C, "C", allow_empty_rows=True)
    if C.shape[1] != A.shape[0]:
        raise DimensionMismatch(f"C has {C.shape[1]} columns, A is {A.shape[0]}x{A.shape[0]}")
    if C.shape[0] == 0:
        return False
    return numeric_rank(observability_matrix(A, C), tol) == A.shape[0]


def is_detectable(A, C, tol: Tolerance = DEFAULT_TOL) -> bool:
    """PBH test on every mode with ``|lambda| >= 1 - stability_margin``."""
    A = as_matrix(A, "A")
    C = as_matrix(C, "C", allow_empty_rows=True)
    if A.shape[0] != A.shape[1] or C.shape[1] != A.shape[0]:
        raise DimensionMismatch(f"incompatible shapes A {A.shape}, C {C.shape}")
    return _pbh_detectable(A, C, tol)


@dataclass(frozen=True)
class SensorSelection:
    """A sorted set of 0-based sensor indices out of ``p`` candidates."""

    indices: tuple[int, ...]
    p: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidArgument(f"indices must be strictly increasing, got {idx}")
        if idx and (idx[0] < 0 or idx[-1] >= self.p):
            raise InvalidArgument(f"indices must lie in 0..{self.p - 1}, got {idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, indices, p: int) -> "SensorSelection":
        return cls(tuple(sorted(int(i) for i in indices)), p)

    @classmethod
    def from_one_based(cls, labels, p: int) -> "SensorSelection":
        return cls.of([int(q) - 1 for q in labels], p)

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def one_based(self) -> tuple[int, ...]:
        return tuple(i + 1 for i in self.indices)

    def matrix(self) -> np.ndarray:
        """The selection matrix ``S(Q)``; rows are unit vectors ``e_q``."""
        S = np.zeros((self.size, self.p))
        S[np.arange(self.size), list(self.indices)] = 1.0
        return S

    def apply(self, C) -> np.ndarray:
        return np.asarray(C)[list(self.indices)]


@dataclass
class SelectionProblem:
    """Pick ``budget`` of the ``p`` rows of ``system.C`` maximizing ``metric``."""

    system: LtiSystem
    budget: int
    metric: GramianMetric
    witness: SensorSelection | None = None
    tol: Tolerance = DEFAULT_TOL

    def __post_init__(self):
        self.metric = parse_metric(self.metric)
        if not 1 <= self.budget <= self.system.p:
            raise InvalidArgument(f"budget must lie in 1..{self.system.p}, got {self.budget}")
        if self.witness is not None:
            if self.witness.p != self.system.p:
                raise InvalidArgument("witness selection refers to a different sensor count")
            if not is_observable(self.system.A, self.witness.apply(self.system.C), self.tol):
                raise InvalidArgument("witness selection does not make the system observable")

    @property
    def p(self) -> int:
        return self.system.p

    @cached_property
    def scorer(self) -> SubsetScorer:
        s = self.system
        return SubsetScorer(s.A, s.B, s.C, s.D, self.metric, self.tol)

    @cached_property
    def _critical_modes(self) -> np.ndarray:
        lam = np.linalg.eigvals(self.system.A)
        return lam[np.abs(lam) >= 1.0 - self.tol.stability_margin]

    def detectable(self, indices) -> bool:
        if self._critical_modes.size == 0:
            return True
        C = self.system.C[list(indices)].astype(complex)
        A = self.system.A
        eye = np.eye(self.system.n)
        for lam in self._critical_modes:
            if numeric_rank(np.vstack([A - lam * eye, C]), self.tol) < self.system.n:
                return False
        return True

    def score(self, indices) -> float:
        return self.scorer.score(indices)


@dataclass(frozen=True)
class SelectionResult:
    q_star: SensorSelection
    score: float
    detectable: bool
    algorithm: str
    evaluations: int
    fallback_used: bool
    wall_time: float = 0.0
    repaired: bool = False
    repair_evaluations: int = 0
    notes: tuple[str, ...] = field(default_factory=tuple)


def growth_estimate(p: int, k: int) -> str:
    """Human-readable size of the search space and its asymptotic growth."""
    total = math.comb(p, k)
    bound = (2.0 * p / math.e) ** k
    return (
        f"C({p},{k}) = {total:,} subsets; the count grows no faster than "
        f"(2p/e)^p* ~ (0.736 p)^p* = {bound:.3g}"
    )


def random_trial_count(alpha: float, p: int, k: int) -> int:
    """``ceil(alpha * C(p, k))`` using the decimal value the caller wrote."""
    if not alpha > 0:
        raise InvalidArgument(f"alpha must be positive, got {alpha}")
    return math.ceil(Decimal(repr(float(alpha))) * math.comb(p, k))


# --- search machinery ----------------------------------------------------


@dataclass
class _Best:
    score: float = -math.inf
    order: int = -1
    subset: tuple[int, ...] | None = None

    def offer(self, score: float, order: int, subset) -> None:
        if self.subset is None or score > self.score or (score == self.score and order < self.order):
            self.score, self.order, self.subset = score, order, tuple(int(i) for i in subset)


def _chunk_best(prob: SelectionProblem, subsets: np.ndarray, offset: int) -> tuple[_Best, _Best]:
    """Best detectable and best unconstrained subset in one chunk.

    Ties go to the earliest position, which reproduces the strict ``>``
    update of a serial scan.
    """
    scores = prob.scorer.scores(subsets)
    any_best, det_best = _Best(), _Best()
    top = int(np.argmax(scores))
    any_best.offer(float(scores[top]), offset + top, subsets[top])
    for pos in np.lexsort((np.arange(len(scores)), -scores)):
        if prob.detectable(subsets[pos]):
            det_best.offer(float(scores[pos]), offset + int(pos), subsets[pos])
            break
    return det_best, any_best


def _run_chunks(prob, chunks: Iterator[tuple[int, np.ndarray]], workers: int):
    det, unconstrained = _Best(), _Best()
    count = 0

    def job(item):
        offset, subsets = item
        return len(subsets), _chunk_best(prob, subsets, offset)

    if workers > 1:
        prob.scorer.row_gramians  # cached_property is not thread-safe; fill it first
        prob._critical_modes
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, chunks))
    else:
        results = map(job, chunks)
    for size, (d, a) in results:
        count += size
        if d.subset is not None:
            det.offer(d.score, d.order, d.subset)
        unconstrained.offer(a.score, a.order, a.subset)
    return det, unconstrained, count


def _finish(prob, det: _Best, unconstrained: _Best, algorithm: str, count: int, t0: float, notes=()):
    if det.subset is not None:
        q, score, ok = det.subset, det.score, True
    else:
        q, score, ok = unconstrained.subset, unconstrained.score, False
    return SelectionResult(
        q_star=SensorSelection.of(q, prob.p),
        score=score,
        detectable=ok,
        algorithm=algorithm,
        evaluations=count,
        fallback_used=not ok,
        wall_time=time.perf_counter() - t0,
        notes=tuple(notes),
    )


def _combination_chunks(p: int, k: int, size: int):
    it = combinations(range(p), k)
    offset = 0
    while True:
        block = list(islice(it, size))
        if not block:
            return
        yield offset, np.array(block, dtype=int).reshape(len(block), k)
        offset += len(block)


def select_exhaustive(
    prob: SelectionProblem,
    *,
    cap: int = DEFAULT_CAP,
    workers: int = 1,
    chunk_size: int = _CHUNK,
) -> SelectionResult:
    """Score every size-``budget`` subset in lexicographic order.

    Returns the best detectable subset (lexicographically first among equal
    scores) or, when none is detectable, the best subset overall with
    ``fallback_used=True``.
    """
    p, k = prob.p, prob.budget
    total = math.comb(p, k)
    if total > cap:
        est = growth_estimate(p, k)
        raise BudgetExceeded(f"exhaustive search refused: {est}; cap is {cap:,}", growth_estimate=est)
    t0 = time.perf_counter()
    det, unconstrained, count = _run_chunks(prob, _combination_chunks(p, k, chunk_size), workers)
    assert count == total
    return _finish(prob, det, unconstrained, "exhaustive", count, t0)


def draw_subset(seed: int, trial: int, p: int, k: int) -> tuple[int, ...]:
    """Scalar reference for one trial's draw (1-based, in draw order).

    Partial Fisher-Yates: pick a position uniformly among the first
    ``p - j + 1`` entries of ``idx`` and overwrite it with the last of them.
    """
    gen = SplitMix64(trial_state(seed, trial))
    idx = list(range(1, p + 1))
    q = []
    for j in range(1, k + 1):
        i = gen.discrete_uniform(p - j + 1)
        q.append(idx[i - 1])
        idx[i - 1] = idx[p - j]
    return tuple(q)


def _draw_block(seed: int, start: int, stop: int, p: int, k: int) -> np.ndarray:
    trials = np.arange(start, stop, dtype=np.uint64)
    states = trial_states(seed, trials)
    rows = np.arange(len(trials))
    idx = np.tile(np.arange(1, p + 1, dtype=np.int64), (len(trials), 1))
    q = np.empty((len(trials), k), dtype=np.int64)
    for j in range(1, k + 1):
        i, states = discrete_uniform_array(states, p - j + 1)
        q[:, j - 1] = idx[rows, i - 1]
        idx[rows, i - 1] = idx[:, p - j]
    return q


def _trial_chunks(seed: int, trials: int, p: int, k: int, size: int):
    for start in range(0, trials, size):
        stop = min(trials, start + size)
        q = _draw_block(seed, start, stop, p, k)
        yield start, np.sort(q, axis=1) - 1


def select_random(
    prob: SelectionProblem,
    alpha: float,
    seed: int,
    *,
    cap: int = DEFAULT_CAP,
    workers: int = 1,
    chunk_size: int = _CHUNK,
) -> SelectionResult:
    """Score ``ceil(alpha * C(p, budget))`` uniformly drawn subsets.

    Trial ``j`` draws from its own SplitMix64 stream keyed by ``(seed, j)``,
    so the result does not depend on ``workers`` or ``chunk_size``.
    """
    p, k = prob.p, prob.budget
    trials = random_trial_count(alpha, p, k)
    if trials > cap:
        est = growth_estimate(p, k)
        raise BudgetExceeded(
            f"random search refused: {trials:,} trials exceed cap {cap:,}; {est}", growth_estimate=est
        )
    t0 = time.perf_counter()
    det, unconstrained, count = _run_chunks(prob, _trial_chunks(seed, trials, p, k, chunk_size), workers)
    assert count == trials
    return _finish(prob, det, unconstrained, "random", count, t0, notes=(f"seed={seed}", f"alpha={alpha!r}"))


def _repair(prob: SelectionProblem, chosen: set[int]) -> tuple[set[int], int, int]:
    """Swap witness sensors in until the set is detectable.

    Each round tries every swap of a not-yet-chosen witness sensor for a
    chosen sensor that was not itself swapped in. Swaps that reach
    detectability win, then higher score, then the earliest (in, out) pair.
    Returns the set, the swap count and the metric evaluations spent.
    """
    witness = set(prob.witness.indices)
    locked: set[int] = set()
    evals = swaps = 0
    while not prob.detectable(sorted(chosen)):
        ins = sorted(witness - chosen)
        outs = sorted(chosen - locked)
        if not ins or not outs:
            break
        moves = [(w, g) for w in ins for g in outs]
        subsets = [sorted((chosen - {g}) | {w}) for w, g in moves]
        scores = prob.scorer.scores(np.array(subsets, dtype=int))
        evals += len(moves)
        ok = [prob.detectable(q) for q in subsets]
        best = max(range(len(moves)), key=lambda i: (ok[i], scores[i], -i))
        w, g = moves[best]
        chosen = (chosen - {g}) | {w}
        locked.add(w)
        swaps += 1
    return chosen, swaps, evals


def select_greedy(prob: SelectionProblem) -> SelectionResult:
    """Grow the set one sensor at a time by largest metric value.

    Ties go to the smallest index. If the final set is undetectable and the
    problem carries a feasibility witness, witness sensors are swapped in
    (see ``_repair``); the result's ``algorithm`` tag records this.
    """
    if not prob.metric.monotone:
        warnings.warn(f"greedy selection on non-monotone metric {prob.metric.value}", stacklevel=2)
    t0 = time.perf_counter()
    p, k = prob.p, prob.budget
    chosen: list[int] = []
    evaluations = 0
    score = -math.inf
    for _ in range(k):
        candidates = [s for s in range(p) if s not in chosen]
        subsets = np.array([sorted(chosen + [s]) for s in candidates], dtype=int)
        scores = prob.scorer.scores(subsets)
        evaluations += len(candidates)
        best = int(np.argmax(scores))
        chosen.append(candidates[best])
        score = float(scores[best])

    final = set(chosen)
    ok = prob.detectable(sorted(final))
    algorithm, repaired, repair_evals, notes = "greedy", False, 0, []
    if not ok and prob.witness is not None:
        final, swaps, repair_evals = _repair(prob, final)
        ok = prob.detectable(sorted(final))
        algorithm = "greedy+witness-repair"
        repaired = swaps > 0
        notes.append(f"witness repair: {swaps} swap(s)")
        if swaps:
            score = prob.score(sorted(final))
            repair_evals += 1
    return SelectionResult(
        q_star=SensorSelection.of(final, p),
        score=score,
        detectable=ok,
        algorithm=algorithm,
        evaluations=evaluations,
        fallback_used=not ok,
        wall_time=time.perf_counter() - t0,
        repaired=repaired,
        repair_evaluations=repair_evals,
        notes=tuple(notes),
    )
