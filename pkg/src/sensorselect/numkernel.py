"""Dense linear-algebra primitives: rank, spectra and matrix-equation solvers.

Everything here is a pure function of its arguments. Numerical cutoffs are
collected in :class:`Tolerance` so callers can tighten or relax them in one
place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidArgument,
    InvalidMatrix,
    NoConvergence,
    UndetectablePair,
    UnstableSystem,
)

__all__ = [
    "Tolerance",
    "DEFAULT_TOL",
    "as_matrix",
    "numeric_rank",
    "rank_cutoff",
    "spectral_radius",
    "solve_discrete_lyapunov",
    "eig_symmetric",
    "solve_discrete_riccati",
]

_LYAP_MAX_DOUBLINGS = 100
_RICCATI_MAX_ITER = 10_000


@dataclass(frozen=True)
class Tolerance:
    """Numerical tolerances.

    ``rank_rtol=None`` selects ``1e-10 * max(rows, cols)`` for each matrix
    whose rank is taken.
    """

    rank_rtol: float | None = None
    stability_margin: float = 1e-9
    residual_atol: float = 1e-9

    def __post_init__(self):
        if self.rank_rtol is not None and not (0.0 < self.rank_rtol < 1.0):
            raise InvalidArgument(f"rank_rtol must lie in (0, 1), got {self.rank_rtol}")
        if not self.stability_margin > 0.0:
            raise InvalidArgument("stability_margin must be strictly positive")
        if not self.residual_atol > 0.0:
            raise InvalidArgument("residual_atol must be strictly positive")

    def rtol_for(self, shape) -> float:
        if self.rank_rtol is not None:
            return self.rank_rtol
        return 1e-10 * max(shape[-2], shape[-1])


DEFAULT_TOL = Tolerance()


def as_matrix(M, name: str = "matrix", allow_empty_rows: bool = False) -> np.ndarray:
    """Validate ``M`` as a finite 2-D real array and return it as float64."""
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise InvalidMatrix(f"{name} must be two-dimensional, got shape {arr.shape}")
    if arr.shape[1] < 1 or (arr.shape[0] < 1 and not allow_empty_rows):
        raise InvalidMatrix(f"{name} must have at least one row and column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix(f"{name} has non-finite entries")
    return arr


def _square(M, name: str) -> np.ndarray:
    arr = as_matrix(M, name)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {arr.shape}")
    return arr


def rank_cutoff(sigma_max, shape, tol: Tolerance = DEFAULT_TOL):
    """Absolute singular-value threshold below which directions are dropped."""
    return tol.rtol_for(shape) * sigma_max


def numeric_rank(M, tol: Tolerance = DEFAULT_TOL):
    """Number of singular values above ``rtol * sigma_max``.

    Accepts a single matrix or a stack of shape ``(k, r, c)``; in the latter
    case an integer array of length ``k`` is returned. Complex input is
    accepted (needed by the PBH test).
    """
    arr = np.asarray(M)
    if arr.ndim < 2:
        arr = np.atleast_2d(arr)
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix("rank of a matrix with non-finite entries")
    if arr.shape[-1] == 0 or arr.shape[-2] == 0:
        out = np.zeros(arr.shape[:-2], dtype=int)
        return int(out) if arr.ndim == 2 else out
    s = np.linalg.svd(arr, compute_uv=False)
    smax = s[..., :1]
    cut = rank_cutoff(smax, arr.shape, tol)
    ranks = np.sum((s > cut) & (smax > 0.0), axis=-1)
    if arr.ndim == 2:
        return int(ranks)
    return ranks


def spectral_radius(M) -> float:
    arr = _square(M, "M")
    return float(np.max(np.abs(np.linalg.eigvals(arr))))


def eig_symmetric(M, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Real eigenvalues of a symmetric matrix in descending order.

    ``(M + M^T)/2`` is decomposed, so asymmetry at rounding level is harmless;
    anything larger raises.
    """
    arr = _square(M, "M")
    asym = np.linalg.norm(arr - arr.T)
    if asym > tol.residual_atol * (1.0 + np.linalg.norm(arr)) * 1e3:
        raise InvalidArgument(f"matrix is not symmetric (asymmetry {asym:.3e})")
    sym = 0.5 * (arr + arr.T)
    return np.linalg.eigvalsh(sym)[::-1]


def solve_discrete_lyapunov(A, Q, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Solve ``A^T X A - X + Q = 0`` by the doubling iteration.

    After ``k`` squarings the iterate holds the first ``2**k`` terms of
    ``sum_j (A^T)^j Q A^j``.
    """
    A = _square(A, "A")
    Q = _square(Q, "Q")
    if A.shape != Q.shape:
        raise DimensionMismatch(f"A {A.shape} and Q {Q.shape} differ in size")
    qnorm = np.linalg.norm(Q)
    if np.linalg.norm(Q - Q.T) > tol.residual_atol * (1.0 + qnorm):
        raise InvalidArgument("Q must be symmetric")
    rho = spectral_radius(A)
    if rho >= 1.0 - tol.stability_margin:
        raise UnstableSystem(f"spectral radius {rho:.6g} is not below 1 - {tol.stability_margin:g}")

    X = _doubling(A, 0.5 * (Q + Q.T))
    bound = tol.residual_atol * (1.0 + qnorm)
    for _ in range(3):
        R = A.T @ X @ A - X + Q
        if np.linalg.norm(R) <= bound:
            return X
        X = X + _doubling(A, 0.5 * (R + R.T))
        X = 0.5 * (X + X.T)
    resid = np.linalg.norm(A.T @ X @ A - X + Q)
    if resid > bound:
        raise NoConvergence(f"Lyapunov residual {resid:.3e} exceeds {bound:.3e}")
    return X


def _doubling(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    X = Q
    Ak = A.copy()
    for _ in range(_LYAP_MAX_DOUBLINGS):
        step = Ak.T @ X @ Ak
        X = X + step
        Ak = Ak @ Ak
        if np.linalg.norm(step) <= 1e-17 * np.linalg.norm(X) or not np.any(Ak):
            return 0.5 * (X + X.T)
    raise NoConvergence("Lyapunov doubling did not converge")


def _pbh_detectable(A: np.ndarray, C: np.ndarray, tol: Tolerance) -> bool:
    n = A.shape[0]
    if C.shape[0] == 0:
        return spectral_radius(A) < 1.0 - tol.stability_margin
    eye = np.eye(n)
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1.0 - tol.stability_margin:
            if numeric_rank(np.vstack([A - lam * eye, C.astype(complex)]), tol) < n:
                return False
    return True


def solve_discrete_riccati(A, C, Qw, Rv, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Stabilizing solution of the filter-form discrete algebraic Riccati equation

        P = A P A^T - A P C^T (C P C^T + Rv)^{-1} C P A^T + Qw

    obtained by iterating the Riccati difference equation from ``P = Qw``.
    """
    A = _square(A, "A")
    C = as_matrix(C, "C")
    Qw = _square(Qw, "Qw")
    Rv = _square(Rv, "Rv")
    n, p = A.shape[0], C.shape[0]
    if C.shape[1] != n or Qw.shape[0] != n or Rv.shape[0] != p:
        raise DimensionMismatch(
            f"incompatible shapes A {A.shape}, C {C.shape}, Qw {Qw.shape}, Rv {Rv.shape}"
        )
    if np.min(np.linalg.eigvalsh(0.5 * (Rv + Rv.T))) <= 0.0:
        raise InvalidArgument("Rv must be positive definite")
    if np.min(np.linalg.eigvalsh(0.5 * (Qw + Qw.T))) < -tol.residual_atol:
        raise InvalidArgument("Qw must be positive semidefinite")
    if not _pbh_detectable(A, C, tol):
        raise UndetectablePair("(A, C) is not detectable")

    P = Qw.copy()
    for _ in range(_RICCATI_MAX_ITER):
        S = C @ P @ C.T + Rv
        K = np.linalg.solve(S, C @ P @ A.T)
        P_next = A @ P @ A.T - (A @ P @ C.T) @ K + Qw
        P_next = 0.5 * (P_next + P_next.T)
        diff = np.linalg.norm(P_next - P)
        P = P_next
        if not np.all(np.isfinite(P)):
            raise NoConvergence("Riccati iteration diverged")
        if diff < tol.residual_atol * (1.0 + np.linalg.norm(P)):
            return P
    raise NoConvergence(f"Riccati iteration did not settle in {_RICCATI_MAX_ITER} steps")
