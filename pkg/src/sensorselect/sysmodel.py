"""Discrete-time LTI systems, their simulation, and road-network compilation.

The network model is a macroscopic flow-conservation model: each road
segment keeps a fraction of its flow (``retention``) for the next step and
routes fractions of it downstream (``turning_ratios``). Column ``i`` of the
compiled ``A`` therefore sums to at most one, and flow that leaves the
network makes ``A`` strictly stable.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import DimensionMismatch, InvalidArgument, InvalidNetwork
from .numkernel import as_matrix, spectral_radius

log = logging.getLogger(__name__)

__all__ = [
    "LtiSystem",
    "Trajectory",
    "EnergyReport",
    "RoadNetwork",
    "Segment",
    "simulate",
    "output_energy",
    "compile_network",
    "load_network",
    "load_raw_system",
    "synthetic_grid",
]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LtiSystem:
    """``x(t+1) = A x(t) + B u(t)``, ``y(t) = C x(t) + D u(t)``.

    The ``p`` rows of ``C`` are the candidate sensors. ``D`` defaults to zero.
    ``output_names`` optionally labels those rows (segment ids for compiled
    networks).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray | None = None
    output_names: tuple[str, ...] | None = None

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        C = as_matrix(self.C, "C")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionMismatch(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise DimensionMismatch(f"C must have {n} columns, got {C.shape}")
        D = np.zeros((C.shape[0], B.shape[1])) if self.D is None else as_matrix(self.D, "D")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionMismatch(f"D must be {(C.shape[0], B.shape[1])}, got {D.shape}")
        names = self.output_names
        if names is not None:
            names = tuple(str(s) for s in names)
            if len(names) != C.shape[0]:
                raise DimensionMismatch("output_names must label every row of C")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "D", _frozen(D))
        object.__setattr__(self, "output_names", names)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def sensor_label(self, index: int) -> str:
        if self.output_names is None:
            return str(index + 1)
        return self.output_names[index]


@dataclass(frozen=True)
class Trajectory:
    """Simulated response over ``T`` steps.

    ``states`` has ``T + 1`` rows (``x(0)..x(T)``); the output arrays have
    ``T`` rows (``y(0)..y(T-1)``), one per applied input.
    """

    states: np.ndarray
    outputs: np.ndarray
    natural_outputs: np.ndarray
    forced_outputs: np.ndarray


@dataclass(frozen=True)
class EnergyReport:
    x0: np.ndarray
    horizon: int
    energy: float


def _inputs(sys: LtiSystem, inputs, T: int) -> np.ndarray:
    if inputs is None:
        return np.zeros((T, sys.m))
    U = np.asarray(inputs, dtype=float)
    if U.ndim == 1 and sys.m == 1:
        U = U.reshape(-1, 1)
    if U.ndim != 2 or U.shape[1] != sys.m:
        raise DimensionMismatch(f"inputs must have shape (T, {sys.m}), got {U.shape}")
    if U.shape[0] < T:
        raise InvalidArgument(f"need at least {T} input samples, got {U.shape[0]}")
    return U[:T]


def _vector(v, n: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (n,):
        raise DimensionMismatch(f"{name} must have length {n}, got {v.shape[0]}")
    return v


def simulate(sys: LtiSystem, x0, inputs=None, T: int = 1) -> Trajectory:
    """Run the state recursion for ``T`` steps.

    The natural and forced parts are propagated by their own recursions, so
    ``outputs == natural_outputs + forced_outputs`` is a genuine check rather
    than a definition.
    """
    if T < 1:
        raise InvalidArgument("T must be at least 1")
    x0 = _vector(x0, sys.n, "x0")
    U = _inputs(sys, inputs, T)
    A, B, C, D = sys.A, sys.B, sys.C, sys.D

    X = np.empty((T + 1, sys.n))
    Xn = np.empty_like(X)
    Xf = np.empty_like(X)
    X[0] = Xn[0] = x0
    Xf[0] = 0.0
    for t in range(T):
        X[t + 1] = A @ X[t] + B @ U[t]
        Xn[t + 1] = A @ Xn[t]
        Xf[t + 1] = A @ Xf[t] + B @ U[t]

    Y = X[:T] @ C.T + U @ D.T
    Yn = Xn[:T] @ C.T
    Yf = Xf[:T] @ C.T + U @ D.T
    return Trajectory(states=X, outputs=Y, natural_outputs=Yn, forced_outputs=Yf)


def output_energy(sys: LtiSystem, x0, t: int) -> EnergyReport:
    """Energy of the natural response, ``sum_{k<t} ||C A^k x0||^2``."""
    if t < 1:
        raise InvalidArgument("horizon t must be at least 1")
    x = _vector(x0, sys.n, "x0")
    energy = 0.0
    for _ in range(t):
        y = sys.C @ x
        energy += float(y @ y)
        x = sys.A @ x
    return EnergyReport(x0=np.array(x0, dtype=float), horizon=t, energy=energy)


# --- road networks -------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Segment(_Strict):
    id: str
    name: str = ""
    length: float = Field(default=0.0, ge=0.0, description="meters")


class TurningRatio(_Strict):
    from_: str = Field(alias="from")
    to: str
    ratio: float = Field(ge=0.0, le=1.0)

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class BoundaryInflow(_Strict):
    segment: str
    input: int = Field(ge=0, description="column of B fed by this inflow")


class RoadNetwork(_Strict):
    """JSON-facing road network description; see ``compile_network``."""

    segments: list[Segment]
    turning_ratios: list[TurningRatio] = []
    retention: dict[str, float] = {}
    boundary_inflows: list[BoundaryInflow] = []
    candidate_sensors: list[str]

    def segment_ids(self) -> list[str]:
        return [s.id for s in self.segments]


def _check_network(net: RoadNetwork) -> dict[str, int]:
    ids = net.segment_ids()
    if not ids:
        raise InvalidNetwork("network has no segments")
    if len(set(ids)) != len(ids):
        raise InvalidNetwork("duplicate segment ids")
    pos = {sid: i for i, sid in enumerate(ids)}
    for key in net.retention:
        if key not in pos:
            raise InvalidNetwork(f"retention given for unknown segment {key!r}")
    for sid, r in net.retention.items():
        if not 0.0 <= r < 1.0:
            raise InvalidNetwork(f"retention of {sid!r} must lie in [0, 1), got {r}")
    seen = set()
    for tr in net.turning_ratios:
        for end in (tr.from_, tr.to):
            if end not in pos:
                raise InvalidNetwork(f"turning ratio references unknown segment {end!r}")
        if (tr.from_, tr.to) in seen:
            raise InvalidNetwork(f"turning ratio {tr.from_!r}->{tr.to!r} given twice")
        seen.add((tr.from_, tr.to))
    for inflow in net.boundary_inflows:
        if inflow.segment not in pos:
            raise InvalidNetwork(f"inflow into unknown segment {inflow.segment!r}")
    if not net.candidate_sensors:
        raise InvalidNetwork("candidate_sensors is empty")
    if len(set(net.candidate_sensors)) != len(net.candidate_sensors):
        raise InvalidNetwork("duplicate candidate sensor ids")
    for sid in net.candidate_sensors:
        if sid not in pos:
            raise InvalidNetwork(f"candidate sensor on unknown segment {sid!r}")
    return pos


def compile_network(net: RoadNetwork) -> LtiSystem:
    """Build ``(A, B, C, 0)`` from a road network.

    ``A[i, i]`` is the retention of segment ``i`` and ``A[j, i]`` the turning
    ratio ``i -> j``. Each boundary inflow puts a one in ``B``; each candidate
    sensor contributes a binary row of ``C``.
    """
    pos = _check_network(net)
    n = len(pos)
    A = np.zeros((n, n))
    for sid, r in net.retention.items():
        A[pos[sid], pos[sid]] = r
    for tr in net.turning_ratios:
        A[pos[tr.to], pos[tr.from_]] += tr.ratio
    outflow = A.sum(axis=0)
    bad = np.flatnonzero(outflow > 1.0 + 1e-12)
    if bad.size:
        sid = net.segments[bad[0]].id
        raise InvalidNetwork(
            f"segment {sid!r}: retention + outgoing turning ratios = {outflow[bad[0]]:.6g} > 1"
        )

    m = max((f.input for f in net.boundary_inflows), default=0) + 1
    B = np.zeros((n, m))
    for f in net.boundary_inflows:
        B[pos[f.segment], f.input] = 1.0

    C = np.zeros((len(net.candidate_sensors), n))
    for row, sid in enumerate(net.candidate_sensors):
        C[row, pos[sid]] = 1.0

    rho = spectral_radius(A)
    if rho >= 1.0:
        log.warning("compiled network is not asymptotically stable (spectral radius %.6g)", rho)
    else:
        log.info("compiled %d-segment network, spectral radius %.6g", n, rho)
    return LtiSystem(A=A, B=B, C=C, D=None, output_names=tuple(net.candidate_sensors))


def load_network(path) -> RoadNetwork:
    text = Path(path).read_text()
    try:
        return RoadNetwork.model_validate_json(text)
    except ValidationError as exc:
        raise InvalidNetwork(f"{path}: {exc}") from exc


class _RawSystem(_Strict):
    A: list[list[float]]
    B: list[list[float]]
    C: list[list[float]]
    D: list[list[float]] | None = None
    sensor_names: list[str] | None = None


def load_raw_system(path) -> LtiSystem:
    """Read ``{"A": .., "B": .., "C": .., "D"?: .., "sensor_names"?: ..}``."""
    try:
        raw = _RawSystem.model_validate_json(Path(path).read_text())
    except ValidationError as exc:
        raise InvalidArgument(f"{path}: {exc}") from exc
    return LtiSystem(
        A=np.array(raw.A),
        B=np.array(raw.B),
        C=np.array(raw.C),
        D=None if raw.D is None else np.array(raw.D),
        output_names=None if raw.sensor_names is None else tuple(raw.sensor_names),
    )


def synthetic_grid(rows: int = 2, cols: int = 11, seed: int = 0) -> RoadNetwork:
    """A one-way street grid with ``rows * cols`` segments.

    Segments are laid out row-major; flow moves east along rows and
    alternately north/south between rows. Turning ratios and retentions are
    drawn from a seeded generator so the network is reproducible. Every
    segment is a candidate sensor location and the western column receives
    boundary inflows.
    """
    rng = np.random.default_rng(seed)
    ids = [f"r{r}c{c}" for r in range(rows) for c in range(cols)]
    segments = [
        {"id": sid, "name": f"street {sid}", "length": float(rng.uniform(80.0, 400.0))}
        for sid in ids
    ]
    turning, retention = [], {}
    for r in range(rows):
        for c in range(cols):
            here = f"r{r}c{c}"
            targets = []
            if c + 1 < cols:
                targets.append(f"r{r}c{c + 1}")
            vertical = r + 1 if c % 2 == 0 else r - 1
            if 0 <= vertical < rows:
                targets.append(f"r{vertical}c{c}")
            keep = float(rng.uniform(0.1, 0.4))
            retention[here] = keep
            if targets:
                # a fraction always exits the grid, keeping A strictly stable
                budget = (1.0 - keep) * float(rng.uniform(0.6, 0.9))
                split = rng.dirichlet(np.ones(len(targets)))
                for tgt, share in zip(targets, split):
                    turning.append({"from": here, "to": tgt, "ratio": float(budget * share)})
    inflows = [{"segment": f"r{r}c0", "input": r} for r in range(rows)]
    return RoadNetwork.model_validate(
        {
            "segments": segments,
            "turning_ratios": turning,
            "retention": retention,
            "boundary_inflows": inflows,
            "candidate_sensors": ids,
        }
    )


def network_to_json(net: RoadNetwork) -> str:
    return json.dumps(net.model_dump(by_alias=True), indent=2)
