"""Command-line front end.

Loads a road network or a raw ``(A, B, C, D)`` system, runs one of the
selection algorithms, validates the chosen sensors with an observer replay
and writes a JSON report plus a CSV error trace.

Exit codes: 0 success, 2 when no detectable subset was found (fallback
result), 1 on any error (including ``--require-detectable`` failures).
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict

from .errors import BudgetExceeded, InvalidArgument, SensorSelectError
from .numkernel import DEFAULT_TOL, Tolerance, spectral_radius
from .observability import GramianMetric, SubsetScorer, parse_metric
from .observer import design_observer, run_estimator
from .selection import (
    DEFAULT_CAP,
    SelectionProblem,
    SensorSelection,
    select_exhaustive,
    select_greedy,
    select_random,
)
from .sysmodel import LtiSystem, compile_network, load_network, load_raw_system

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
CSV_COLUMNS = ("t", "state", "x_true", "x_hat", "error")
ALGORITHMS = ("exhaustive", "random", "greedy")
EXIT_OK, EXIT_ERROR, EXIT_FALLBACK = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    input: Path
    mode: Literal["network", "raw-system"]
    metric: GramianMetric
    budget: int
    algorithm: str
    output: Path
    alpha: float | None = None
    seed: int | None = None
    horizon: int = 50
    require_detectable: bool = False
    rank_rtol: float | None = None
    workers: int = 1
    cap: int = DEFAULT_CAP
    witness: tuple[int, ...] | None = None
    timing: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidArgument(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.algorithm != "random" and (self.alpha is not None or self.seed is not None):
            raise InvalidArgument("--alpha and --seed only apply to --algorithm random")
        if self.alpha is not None and not self.alpha > 0:
            raise InvalidArgument("--alpha must be positive")
        if self.horizon < 1:
            raise InvalidArgument("--horizon must be at least 1")
        if self.workers < 1:
            raise InvalidArgument("--workers must be at least 1")

    @property
    def tol(self) -> Tolerance:
        if self.rank_rtol is None:
            return DEFAULT_TOL
        return Tolerance(rank_rtol=self.rank_rtol)

    @property
    def trace_path(self) -> Path:
        return self.output.with_suffix(".errors.csv")


class SensorScore(BaseModel):
    model_config = ConfigDict(extra="forbid")
    index: int
    sensor: str
    name: str
    score: float


class ObserverSummary(BaseModel):
    model_config = ConfigDict(extra="forbid")
    closed_loop_radius: float
    horizon: int
    converged: bool
    initial_error_norm: float
    final_error_norm: float
    error_trace_csv: str
    csv_columns: list[str]


class Report(BaseModel):
    """Machine-readable run report. ``indices`` are 1-based rows of C."""

    model_config = ConfigDict(extra="forbid")
    schema_version: str = SCHEMA_VERSION
    status: Literal["ok", "fallback", "refused", "undetectable"]
    input: str
    mode: str
    metric: str
    algorithm: str
    budget: int
    n: int
    p: int
    spectral_radius: float
    alpha: float | None = None
    seed: int | None = None
    indices: list[int] = []
    sensors: list[str] = []
    segment_names: list[str] = []
    score: float | None = None
    detectable: bool | None = None
    fallback_used: bool | None = None
    repaired: bool = False
    evaluations: int = 0
    repair_evaluations: int = 0
    single_sensor_scores: list[SensorScore] = []
    observer: ObserverSummary | None = None
    growth_estimate: str | None = None
    notes: list[str] = []
    wall_time_s: float | None = None


def emit_single_sensor_table(system: LtiSystem, metric, tol: Tolerance = DEFAULT_TOL) -> list[tuple[int, float]]:
    """``(index, f({index}))`` for every candidate, best first, ties by index."""
    scorer = SubsetScorer(system.A, system.B, system.C, system.D, parse_metric(metric), tol)
    scores = scorer.scores(np.arange(system.p).reshape(-1, 1))
    order = sorted(range(system.p), key=lambda q: (-scores[q], q))
    return [(q, float(scores[q])) for q in order]


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _error_csv(states: np.ndarray, estimates: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for t in range(estimates.shape[0]):
        for i in range(estimates.shape[1]):
            x, xh = states[t, i], estimates[t, i]
            writer.writerow([t, i + 1, repr(float(x)), repr(float(xh)), repr(float(xh - x))])
    return buf.getvalue()


def _load(config: RunConfig) -> tuple[LtiSystem, dict[str, str]]:
    if config.mode == "network":
        net = load_network(config.input)
        names = {s.id: s.name for s in net.segments}
        return compile_network(net), names
    system = load_raw_system(config.input)
    return system, {}


def run(config: RunConfig) -> tuple[Report, int]:
    """Execute one selection run, write its artifacts, return (report, exit code)."""
    system, names = _load(config)
    tol = config.tol
    witness = None
    if config.witness is not None:
        witness = SensorSelection.from_one_based(config.witness, system.p)
    problem = SelectionProblem(system, config.budget, config.metric, witness=witness, tol=tol)
    header = dict(
        input=str(config.input),
        mode=config.mode,
        metric=config.metric.value,
        algorithm=config.algorithm,
        budget=config.budget,
        n=system.n,
        p=system.p,
        spectral_radius=spectral_radius(system.A),
    )
    if config.algorithm == "random":
        header.update(alpha=1.0 if config.alpha is None else config.alpha, seed=config.seed or 0)

    t0 = time.perf_counter()
    try:
        if config.algorithm == "exhaustive":
            result = select_exhaustive(problem, cap=config.cap, workers=config.workers)
        elif config.algorithm == "random":
            result = select_random(
                problem, header["alpha"], header["seed"], cap=config.cap, workers=config.workers
            )
        else:
            result = select_greedy(problem)
    except BudgetExceeded as exc:
        report = Report(status="refused", growth_estimate=exc.growth_estimate, notes=[str(exc)], **header)
        _atomic_write(config.output, report.model_dump_json(indent=2) + "\n")
        return report, EXIT_ERROR

    table = emit_single_sensor_table(system, config.metric, tol)
    label = system.sensor_label
    sensors = [label(q) for q in result.q_star.indices]
    report = Report(
        status="ok" if result.detectable else "fallback",
        indices=list(result.q_star.one_based),
        sensors=sensors,
        segment_names=[names.get(s, s) for s in sensors],
        score=result.score,
        detectable=result.detectable,
        fallback_used=result.fallback_used,
        repaired=result.repaired,
        evaluations=result.evaluations,
        repair_evaluations=result.repair_evaluations,
        single_sensor_scores=[
            SensorScore(index=q + 1, sensor=label(q), name=names.get(label(q), label(q)), score=s)
            for q, s in table
        ],
        notes=list(result.notes),
        **{**header, "algorithm": result.algorithm},
    )

    if result.detectable:
        C_Q = result.q_star.apply(system.C)
        design = design_observer(system.A, C_Q, tol)
        T = config.horizon
        est = run_estimator(
            system,
            result.q_star,
            design,
            x0=np.ones(system.n),
            xhat0=np.zeros(system.n),
            inputs=np.ones((T, system.m)),
            T=T,
        )
        trace = config.trace_path
        _atomic_write(trace, _error_csv(est.estimates - est.errors, est.estimates))
        report.observer = ObserverSummary(
            closed_loop_radius=design.closed_loop_radius,
            horizon=T,
            converged=est.converged,
            initial_error_norm=float(est.error_norms[0]),
            final_error_norm=float(est.error_norms[-1]),
            error_trace_csv=trace.name,
            csv_columns=list(CSV_COLUMNS),
        )

    code = EXIT_OK if result.detectable else EXIT_FALLBACK
    if not result.detectable and config.require_detectable:
        report.status = "undetectable"
        code = EXIT_ERROR
    if config.timing:
        report.wall_time_s = time.perf_counter() - t0
    _atomic_write(config.output, report.model_dump_json(indent=2) + "\n")
    return report, code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sensorselect", description="Observability-based street sensor selection")
    ap.add_argument("--input", required=True, type=Path, help="network or raw-system JSON file")
    ap.add_argument("--mode", choices=("network", "raw-system"), default="network")
    ap.add_argument(
        "--metric", required=True, help="one of: " + ", ".join(m.value for m in GramianMetric)
    )
    ap.add_argument("--budget", required=True, type=int, help="number of sensors p* to select")
    ap.add_argument("--algorithm", choices=ALGORITHMS, default="greedy")
    ap.add_argument("--alpha", type=float, default=None, help="random search: trials = ceil(alpha*C(p,p*))")
    ap.add_argument("--seed", type=int, default=None, help="random search seed")
    ap.add_argument("--horizon", type=int, default=50, help="observer replay length T")
    ap.add_argument("--output", type=Path, default=Path("report.json"))
    ap.add_argument("--require-detectable", action="store_true", help="exit 1 instead of 2 on fallback")
    ap.add_argument("--rank-rtol", type=float, default=None)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--cap", type=int, default=DEFAULT_CAP, help="maximum subsets/trials to evaluate")
    ap.add_argument("--witness", default=None, help="comma-separated 1-based observable selection")
    ap.add_argument("--timing", action="store_true", help="record wall time (breaks byte-identical reports)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = RunConfig(
            input=args.input,
            mode=args.mode,
            metric=parse_metric(args.metric),
            budget=args.budget,
            algorithm=args.algorithm,
            output=args.output,
            alpha=args.alpha,
            seed=args.seed,
            horizon=args.horizon,
            require_detectable=args.require_detectable,
            rank_rtol=args.rank_rtol,
            workers=args.workers,
            cap=args.cap,
            witness=None if args.witness is None else tuple(int(s) for s in args.witness.split(",")),
            timing=args.timing,
        )
        report, code = run(config)
    except (SensorSelectError, OSError, ValueError) as exc:
        print(f"sensorselect: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    summary = ", ".join(report.sensors) if report.sensors else "-"
    print(f"{report.status}: score={report.score} sensors=[{summary}] -> {config.output}")
    return code


if __name__ == "__main__":
    sys.exit(main())
