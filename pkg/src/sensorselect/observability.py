"""Observability matrix, Gramians and the Gramian-based sensor metrics."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch, InvalidArgument
from .numkernel import (
    DEFAULT_TOL,
    Tolerance,
    as_matrix,
    numeric_rank,
    solve_discrete_lyapunov,
)

__all__ = [
    "GramianMetric",
    "GramianBundle",
    "SubsetScorer",
    "LOGDET_SINGULAR",
    "observability_matrix",
    "gramian_finite",
    "gramian_infinite",
    "evaluate_metric",
    "parse_metric",
]

# Stand-in for log det of a singular matrix; finite so comparisons stay total.
LOGDET_SINGULAR = -1e18


class GramianMetric(enum.Enum):
    """The seven Gramian metrics, each maximized.

    The flags record the set-function properties claimed for each metric;
    ``infinite_horizon`` marks the metrics built on the infinite-horizon
    Gramian.
    """

    RANK = "Rank"
    TRACE_OVER_N = "TraceOverN"
    INVERSE_CONDITION_NUMBER = "InverseConditionNumber"
    LAMBDA_MIN = "LambdaMin"
    DET_ROOT_N = "DetRootN"
    H2 = "H2"
    LOG_DET = "LogDet"

    @property
    def monotone(self) -> bool:
        return self is not GramianMetric.INVERSE_CONDITION_NUMBER

    @property
    def submodular(self) -> bool:
        return self not in (GramianMetric.INVERSE_CONDITION_NUMBER, GramianMetric.LAMBDA_MIN)

    @property
    def modular(self) -> bool:
        return self in (GramianMetric.TRACE_OVER_N, GramianMetric.H2)

    @property
    def infinite_horizon(self) -> bool:
        return self in (GramianMetric.H2, GramianMetric.LOG_DET)


def _norm_name(name: str) -> str:
    return name.replace("_", "").replace("-", "").lower()


def parse_metric(name) -> GramianMetric:
    if isinstance(name, GramianMetric):
        return name
    key = _norm_name(str(name))
    for metric in GramianMetric:
        if key in (_norm_name(metric.value), _norm_name(metric.name)):
            return metric
    valid = ", ".join(m.value for m in GramianMetric)
    raise InvalidArgument(f"unknown metric {name!r}; valid metrics are: {valid}")


@dataclass(frozen=True)
class GramianBundle:
    """A Gramian with its horizon (``None`` for infinite) and source pair."""

    W: np.ndarray
    horizon: int | None
    A: np.ndarray
    C: np.ndarray

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def infinite(self) -> bool:
        return self.horizon is None


def _pair(A, C):
    A = as_matrix(A, "A")
    C = as_matrix(C, "C", allow_empty_rows=True)
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    if C.shape[1] != A.shape[0]:
        raise DimensionMismatch(f"C has {C.shape[1]} columns, A is {A.shape[0]}x{A.shape[0]}")
    return A, C


def observability_matrix(A, C) -> np.ndarray:
    """Stack ``[C; CA; ...; CA^(n-1)]``."""
    A, C = _pair(A, C)
    blocks = [C]
    for _ in range(A.shape[0] - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def gramian_finite(A, C, t: int) -> GramianBundle:
    if t < 1:
        raise InvalidArgument("Gramian horizon must be at least 1")
    A, C = _pair(A, C)
    n = A.shape[0]
    W = np.zeros((n, n))
    M = C
    for _ in range(t):
        W += M.T @ M
        M = M @ A
    return GramianBundle(W=0.5 * (W + W.T), horizon=t, A=A, C=C)


def gramian_infinite(A, C, tol: Tolerance = DEFAULT_TOL) -> GramianBundle:
    A, C = _pair(A, C)
    W = solve_discrete_lyapunov(A, C.T @ C, tol)
    return GramianBundle(W=W, horizon=None, A=A, C=C)


def _spectrum_values(metric: GramianMetric, lam: np.ndarray, shape, tol: Tolerance) -> np.ndarray:
    """Metric values from descending eigenvalue rows ``lam`` of shape (k, r)."""
    lmax = lam[:, 0]
    lmin = lam[:, -1]
    cut = tol.rtol_for(shape) * np.abs(lmax)
    singular = (lmin <= cut) | (lmax <= 0.0)
    if metric is GramianMetric.TRACE_OVER_N:
        return lam.sum(axis=1) / lam.shape[1]
    if metric is GramianMetric.LAMBDA_MIN:
        return lmin.copy()
    if metric is GramianMetric.INVERSE_CONDITION_NUMBER:
        out = np.zeros(lam.shape[0])
        ok = ~singular
        out[ok] = lmin[ok] / lmax[ok]
        return out
    if metric is GramianMetric.DET_ROOT_N:
        out = np.zeros(lam.shape[0])
        ok = ~singular
        out[ok] = np.exp(np.mean(np.log(lam[ok]), axis=1))
        return out
    if metric is GramianMetric.H2:
        return lam.sum(axis=1)
    if metric is GramianMetric.LOG_DET:
        out = np.full(lam.shape[0], LOGDET_SINGULAR)
        ok = ~singular
        out[ok] = np.sum(np.log(lam[ok]), axis=1)
        return out
    raise AssertionError(metric)


def _stack_values(metric, Ws, B, DtD, tol: Tolerance) -> np.ndarray:
    """Evaluate ``metric`` on a stack of Gramians ``Ws`` of shape (k, n, n).

    The single-matrix entry point goes through here too, so batched and
    one-at-a-time scores agree bit for bit.
    """
    if metric is GramianMetric.RANK:
        return numeric_rank(Ws, tol).astype(float)
    if metric.infinite_horizon:
        M = np.swapaxes(B, -1, -2) @ Ws @ B
        if DtD is not None:
            M = M + DtD
    else:
        M = Ws
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    if metric is GramianMetric.H2:
        return np.trace(M, axis1=-2, axis2=-1).copy()
    lam = np.linalg.eigvalsh(M)[..., ::-1]
    return _spectrum_values(metric, lam, M.shape, tol)


def evaluate_metric(
    metric,
    W: GramianBundle,
    B=None,
    D=None,
    tol: Tolerance = DEFAULT_TOL,
) -> float:
    """Score a Gramian.

    ``B`` is needed by H2 and LogDet; ``D`` (the selected feedthrough rows)
    is optional and adds ``D^T D`` to ``B^T W B``.
    """
    metric = parse_metric(metric)
    if metric.infinite_horizon != W.infinite:
        want = "infinite" if metric.infinite_horizon else "finite"
        raise InvalidArgument(f"{metric.value} needs a {want}-horizon Gramian")
    DtD = None
    if metric.infinite_horizon:
        if B is None:
            raise InvalidArgument(f"{metric.value} needs the input matrix B")
        B = as_matrix(B, "B")
        if B.shape[0] != W.n:
            raise DimensionMismatch(f"B must have {W.n} rows, got {B.shape}")
        if D is not None:
            D = as_matrix(D, "D", allow_empty_rows=True)
            if D.shape[1] != B.shape[1]:
                raise DimensionMismatch(f"D must have {B.shape[1]} columns, got {D.shape}")
            DtD = (D.T @ D)[None]
    return float(_stack_values(metric, W.W[None], B, DtD, tol)[0])


class SubsetScorer:
    """Scores sensor subsets of one system under one metric.

    Gramians are additive over sensor rows (``C^T C = sum_q c_q^T c_q``), so
    the per-row Gramians are computed once and a subset's Gramian is their
    sum, accumulated in ascending index order.
    """

    def __init__(self, A, B, C, D=None, metric=GramianMetric.RANK, tol: Tolerance = DEFAULT_TOL):
        self.A, self.C = _pair(A, C)
        self.B = as_matrix(B, "B")
        self.D = np.zeros((self.C.shape[0], self.B.shape[1])) if D is None else as_matrix(D, "D")
        self.metric = parse_metric(metric)
        self.tol = tol
        self.n = self.A.shape[0]
        self.p = self.C.shape[0]

    @cached_property
    def row_gramians(self) -> np.ndarray:
        rows = [self.C[q : q + 1] for q in range(self.p)]
        if self.metric.infinite_horizon:
            Ws = [gramian_infinite(self.A, c, self.tol).W for c in rows]
        else:
            Ws = [gramian_finite(self.A, c, self.n).W for c in rows]
        return np.stack(Ws)

    @cached_property
    def row_dtd(self) -> np.ndarray:
        return np.einsum("qi,qj->qij", self.D, self.D)

    def gramians(self, subsets: np.ndarray) -> np.ndarray:
        subsets = np.asarray(subsets, dtype=int)
        k = subsets.shape[0]
        W = np.zeros((k, self.n, self.n))
        G = self.row_gramians
        for col in range(subsets.shape[1]):
            W = W + G[subsets[:, col]]
        return W

    def scores(self, subsets) -> np.ndarray:
        """Scores of a (k, s) integer array of sorted 0-based subsets."""
        subsets = np.atleast_2d(np.asarray(subsets, dtype=int))
        if subsets.size == 0 and subsets.shape[0] == 1:
            subsets = subsets.reshape(1, 0)
        W = self.gramians(subsets)
        DtD = None
        if self.metric.infinite_horizon:
            m = self.B.shape[1]
            DtD = np.zeros((subsets.shape[0], m, m))
            for col in range(subsets.shape[1]):
                DtD = DtD + self.row_dtd[subsets[:, col]]
        return _stack_values(self.metric, W, self.B, DtD, self.tol)

    def score(self, subset) -> float:
        idx = np.array(sorted(subset), dtype=int).reshape(1, -1)
        return float(self.scores(idx)[0])

    def bundle(self, subset) -> GramianBundle:
        idx = np.array(sorted(subset), dtype=int).reshape(1, -1)
        horizon = None if self.metric.infinite_horizon else self.n
        return GramianBundle(W=self.gramians(idx)[0], horizon=horizon, A=self.A, C=self.C[idx[0]])
