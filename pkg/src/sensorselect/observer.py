"""Luenberger observer design and noiseless estimation replay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidArgument, UndetectablePair
from .numkernel import DEFAULT_TOL, Tolerance, as_matrix, solve_discrete_riccati, spectral_radius
from .selection import SensorSelection, is_detectable
from .sysmodel import LtiSystem, simulate

__all__ = ["ObserverDesign", "EstimationRun", "design_observer", "run_estimator"]


@dataclass(frozen=True)
class ObserverDesign:
    L: np.ndarray
    closed_loop_radius: float
    Qw: np.ndarray
    Rv: np.ndarray


@dataclass(frozen=True)
class EstimationRun:
    """Estimator replay over ``T`` steps; arrays have ``T + 1`` rows.

    The plant is simulated without process or measurement noise.
    """

    estimates: np.ndarray
    errors: np.ndarray
    error_norms: np.ndarray
    converged: bool
    noiseless: bool = True


def design_observer(A, C_Q, tol: Tolerance = DEFAULT_TOL, Qw=None, Rv=None) -> ObserverDesign:
    """Stationary Kalman-form gain ``L = -A P C^T (C P C^T + Rv)^{-1}``.

    ``P`` solves the filter Riccati equation with weights ``Qw`` and ``Rv``
    (identity by default), which makes ``A + L C`` Schur stable whenever
    ``(A, C)`` is detectable.
    """
    A = as_matrix(A, "A")
    C = as_matrix(C_Q, "C_Q")
    n, q = A.shape[0], C.shape[0]
    Qw = np.eye(n) if Qw is None else as_matrix(Qw, "Qw")
    Rv = np.eye(q) if Rv is None else as_matrix(Rv, "Rv")
    if not is_detectable(A, C, tol):
        raise UndetectablePair("no stable observer exists: (A, C_Q) is not detectable")
    P = solve_discrete_riccati(A, C, Qw, Rv, tol)
    L = -A @ P @ C.T @ np.linalg.inv(C @ P @ C.T + Rv)
    radius = spectral_radius(A + L @ C)
    if radius >= 1.0:
        raise UndetectablePair(f"observer design failed: closed-loop radius {radius:.6g}")
    return ObserverDesign(L=L, closed_loop_radius=radius, Qw=Qw, Rv=Rv)


def run_estimator(
    sys: LtiSystem,
    selection: SensorSelection,
    design: ObserverDesign,
    x0,
    xhat0=None,
    inputs=None,
    T: int = 50,
    conv_rtol: float = 1e-6,
) -> EstimationRun:
    """Replay the observer against the simulated plant.

    The estimator only sees the selected, feedthrough-free outputs
    ``S(Q) (y - D u)``. ``converged`` means the final error norm dropped
    below ``conv_rtol`` times the initial one.
    """
    if T < 1:
        raise InvalidArgument("T must be at least 1")
    if selection.p != sys.p:
        raise DimensionMismatch("selection does not match the system's sensor count")
    if design.L.shape != (sys.n, selection.size):
        raise DimensionMismatch(f"gain must be {(sys.n, selection.size)}, got {design.L.shape}")
    xhat = np.zeros(sys.n) if xhat0 is None else np.asarray(xhat0, dtype=float).reshape(-1)
    if xhat.shape != (sys.n,):
        raise DimensionMismatch(f"xhat0 must have length {sys.n}")

    traj = simulate(sys, x0, inputs, T)
    U = np.zeros((T, sys.m)) if inputs is None else np.asarray(inputs, dtype=float).reshape(-1, sys.m)[:T]
    S = selection.matrix()
    C_Q = S @ sys.C
    y_sel = (traj.outputs - U @ sys.D.T) @ S.T

    Xh = np.empty((T + 1, sys.n))
    Xh[0] = xhat
    A, B, L = sys.A, sys.B, design.L
    for t in range(T):
        innovation = C_Q @ Xh[t] - y_sel[t]
        Xh[t + 1] = A @ Xh[t] + B @ U[t] + L @ innovation

    E = Xh - traj.states
    norms = np.linalg.norm(E, axis=1)
    converged = bool(norms[0] == 0.0 or norms[-1] <= conv_rtol * norms[0])
    return EstimationRun(estimates=Xh, errors=E, error_norms=norms, converged=converged)
