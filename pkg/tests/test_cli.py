import csv
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from sensorselect.cli import CSV_COLUMNS, Report, RunConfig, _atomic_write, emit_single_sensor_table, main, run
from sensorselect.errors import InvalidArgument
from sensorselect.observability import GramianMetric, SubsetScorer
from sensorselect.sysmodel import LtiSystem, compile_network, load_network, load_raw_system

M = GramianMetric


def cli(*args):
    return main([str(a) for a in args])


def read_report(path) -> Report:
    return Report.model_validate_json(Path(path).read_text())


def test_compartmental_example_exhaustive(tmp_path, samples_dir):
    out = tmp_path / "r.json"
    code = cli("--input", samples_dir / "compartmental.json", "--mode", "raw-system", "--metric", "Rank",
               "--budget", 1, "--algorithm", "exhaustive", "--output", out)
    assert code == 0
    rep = read_report(out)
    assert rep.status == "ok" and rep.indices == [1] and rep.sensors == ["x1"]
    assert rep.score == 3.0 and rep.detectable and not rep.fallback_used
    assert [(s.index, s.score) for s in rep.single_sensor_scores] == [(1, 3.0), (2, 2.0), (3, 2.0)]
    assert rep.observer.closed_loop_radius < 1 and rep.observer.converged
    assert rep.schema_version == "1.0" and rep.wall_time_s is None


def test_grid_greedy_logdet(tmp_path, samples_dir):
    out = tmp_path / "g.json"
    t0 = time.perf_counter()
    code = cli("--input", samples_dir / "grid22.json", "--metric", "LogDet", "--budget", 8, "--output", out)
    elapsed = time.perf_counter() - t0
    assert code == 0 and elapsed < 5.0
    rep = read_report(out)
    assert len(rep.indices) == 8 and len(rep.segment_names) == 8
    assert all(name.startswith("street ") for name in rep.segment_names)
    assert rep.evaluations == sum(22 - k for k in range(8))


def test_invalid_metric_exit_1(tmp_path, samples_dir, capsys):
    code = cli("--input", samples_dir / "grid22.json", "--metric", "Volume", "--budget", 2,
               "--output", tmp_path / "x.json")
    assert code == 1
    err = capsys.readouterr().err
    for m in M:
        assert m.value in err
    assert not (tmp_path / "x.json").exists()


@pytest.mark.parametrize(
    "args",
    [
        ["--budget", "0"],
        ["--budget", "99"],
        ["--budget", "2", "--alpha", "1.0"],
        ["--budget", "2", "--algorithm", "random", "--alpha", "-1"],
        ["--budget", "2", "--algorithm", "annealing"],
        ["--budget", "two"],
        ["--budget", "2", "--horizon", "0"],
    ],
)
def test_argument_errors_exit_1(tmp_path, samples_dir, args):
    with pytest.raises(SystemExit) as info:
        code = cli("--input", samples_dir / "grid22.json", "--metric", "Rank", "--output", tmp_path / "x.json", *args)
        raise SystemExit(code)
    assert info.value.code == 1


def test_missing_and_malformed_input(tmp_path):
    assert cli("--input", tmp_path / "nope.json", "--metric", "Rank", "--budget", 1) == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"A": [[1]], "B": [[1]], "C": [[1]], "extra": 1}')
    assert cli("--input", bad, "--mode", "raw-system", "--metric", "Rank", "--budget", 1,
               "--output", tmp_path / "o.json") == 1


def test_fallback_exit_2_and_require_detectable(tmp_path, samples_dir):
    src = samples_dir / "undetectable.json"
    for algorithm in ("exhaustive", "random", "greedy"):
        out = tmp_path / f"{algorithm}.json"
        extra = ["--alpha", "4", "--seed", "3"] if algorithm == "random" else []
        code = cli("--input", src, "--mode", "raw-system", "--metric", "TraceOverN", "--budget", 1,
                   "--algorithm", algorithm, "--output", out, *extra)
        assert code == 2
        rep = read_report(out)
        assert rep.status == "fallback" and rep.detectable is False and rep.fallback_used
        assert rep.indices == [3] and rep.observer is None  # sees the eigenvalue-3 mode
    out = tmp_path / "strict.json"
    code = cli("--input", src, "--mode", "raw-system", "--metric", "TraceOverN", "--budget", 1,
               "--algorithm", "exhaustive", "--require-detectable", "--output", out)
    assert code == 1 and read_report(out).status == "undetectable"


def test_refused_exhaustive_reports_growth(tmp_path, samples_dir):
    out = tmp_path / "r.json"
    code = cli("--input", samples_dir / "grid22.json", "--metric", "Rank", "--budget", 8,
               "--algorithm", "exhaustive", "--cap", 1000, "--output", out)
    assert code == 1
    rep = read_report(out)
    assert rep.status == "refused" and "319,770" in rep.growth_estimate and "0.736" in rep.growth_estimate


def test_reports_are_byte_identical(tmp_path, samples_dir):
    texts = []
    for i, workers in enumerate((1, 1, 3)):
        out = tmp_path / f"run{i}.json"
        cli("--input", samples_dir / "grid22.json", "--metric", "TraceOverN", "--budget", 3,
            "--algorithm", "random", "--alpha", "0.5", "--seed", 17, "--workers", workers, "--output", out)
        texts.append((out.read_bytes().replace(f"run{i}".encode(), b"run"),
                      out.with_suffix(".errors.csv").read_bytes()))
    assert texts[0] == texts[1] == texts[2]


def test_timing_flag(tmp_path, samples_dir):
    out = tmp_path / "t.json"
    cli("--input", samples_dir / "grid22.json", "--metric", "H2", "--budget", 2, "--timing", "--output", out)
    assert read_report(out).wall_time_s > 0


@pytest.mark.filterwarnings("ignore:greedy selection on non-monotone")
@pytest.mark.parametrize("metric", [m.value for m in M])
def test_report_score_recomputes_from_input(tmp_path, samples_dir, metric):
    out = tmp_path / "s.json"
    src = samples_dir / "grid22.json"
    cli("--input", src, "--metric", metric, "--budget", 3, "--output", out)
    rep = read_report(out)
    system = compile_network(load_network(src))
    scorer = SubsetScorer(system.A, system.B, system.C, system.D, metric)
    assert rep.score == scorer.score([q - 1 for q in rep.indices])
    assert rep.sensors == [system.output_names[q - 1] for q in rep.indices]


def test_report_json_round_trip(tmp_path, samples_dir):
    out = tmp_path / "rt.json"
    cli("--input", samples_dir / "compartmental.json", "--mode", "raw-system", "--metric", "LogDet",
        "--budget", 2, "--output", out)
    rep = read_report(out)
    again = Report.model_validate(json.loads(rep.model_dump_json()))
    assert again == rep
    payload = json.loads(out.read_text())
    payload["unexpected"] = 1
    with pytest.raises(ValueError):
        Report.model_validate(payload)


def test_error_trace_csv(tmp_path, samples_dir):
    out = tmp_path / "c.json"
    cli("--input", samples_dir / "compartmental.json", "--mode", "raw-system", "--metric", "Rank",
        "--budget", 1, "--horizon", 12, "--output", out)
    rep = read_report(out)
    assert rep.observer.error_trace_csv == "c.errors.csv"
    assert rep.observer.csv_columns == list(CSV_COLUMNS)
    with open(tmp_path / "c.errors.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 13 * 3
    assert [r["state"] for r in rows[:3]] == ["1", "2", "3"]
    first = rows[0]
    assert float(first["x_true"]) == 1.0 and float(first["x_hat"]) == 0.0 and float(first["error"]) == -1.0
    last = [float(r["error"]) for r in rows if r["t"] == "12"]
    assert np.linalg.norm(last) == pytest.approx(rep.observer.final_error_norm, rel=1e-12)


def test_witness_flag_triggers_repair(tmp_path):
    raw = {
        "A": [[0.9, 0, 0], [0, 0.8, 0], [0, 0, 1.5]],
        "B": [[1.0], [1.0], [1.0]],
        "C": [[10.0, 0, 0], [0, 9.0, 0], [0, 0, 1.0]],
    }
    src = tmp_path / "w.json"
    src.write_text(json.dumps(raw))
    out = tmp_path / "w_out.json"
    code = cli("--input", src, "--mode", "raw-system", "--metric", "TraceOverN", "--budget", 2,
               "--witness", "1,2,3", "--output", out)
    rep = read_report(out)
    assert code == 0 and rep.repaired and rep.algorithm == "greedy+witness-repair" and rep.indices == [1, 3]
    assert rep.notes == ["witness repair: 1 swap(s)"]


def test_single_sensor_table_examples(tmp_path, samples_dir):
    system = load_raw_system(samples_dir / "compartmental.json")
    assert emit_single_sensor_table(system, "Rank") == [(0, 3.0), (1, 2.0), (2, 2.0)]
    zero = LtiSystem(A=0.5 * np.eye(2), B=np.ones((2, 1)), C=[[1.0, 0.0], [0.0, 0.0], [0.0, 2.0]])
    table = dict(emit_single_sensor_table(zero, "TraceOverN"))
    assert table[1] == 0.0
    ordered = emit_single_sensor_table(zero, "TraceOverN")
    assert [q for q, _ in ordered] == [2, 0, 1]


def test_single_sensor_table_modular_sums(rng):
    sys_ = LtiSystem(A=0.4 * rng.standard_normal((4, 4)), B=rng.standard_normal((4, 2)),
                     C=rng.standard_normal((6, 4)))
    for metric in (M.TRACE_OVER_N, M.H2):
        table = dict(emit_single_sensor_table(sys_, metric))
        scorer = SubsetScorer(sys_.A, sys_.B, sys_.C, None, metric)
        for Q in [(0, 1), (2, 3, 5), tuple(range(6))]:
            assert sum(table[q] for q in Q) == pytest.approx(scorer.score(Q), rel=1e-12)


def test_run_config_validation(tmp_path):
    common = dict(input=tmp_path / "x", mode="network", metric=M.RANK, budget=1, output=tmp_path / "o.json")
    with pytest.raises(InvalidArgument):
        RunConfig(algorithm="greedy", seed=1, **common)
    with pytest.raises(InvalidArgument):
        RunConfig(algorithm="random", alpha=0.0, **common)
    with pytest.raises(InvalidArgument):
        RunConfig(algorithm="exhaustive", workers=0, **common)
    cfg = RunConfig(algorithm="random", alpha=2.0, seed=5, rank_rtol=1e-6, **common)
    assert cfg.tol.rank_rtol == 1e-6 and cfg.trace_path.name == "o.errors.csv"


def test_run_returns_report(tmp_path, samples_dir):
    cfg = RunConfig(input=samples_dir / "compartmental.json", mode="raw-system", metric=M.H2, budget=2,
                    algorithm="exhaustive", output=tmp_path / "run.json")
    rep, code = run(cfg)
    assert code == 0 and rep == read_report(tmp_path / "run.json")


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "sub" / "f.txt"
    _atomic_write(target, "one")
    _atomic_write(target, "two")
    assert target.read_text() == "two"
    assert os.listdir(target.parent) == ["f.txt"]


def test_atomic_write_keeps_old_file_on_failure(tmp_path, monkeypatch):
    target = tmp_path / "f.txt"
    _atomic_write(target, "old")

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        _atomic_write(target, "new")
    assert target.read_text() == "old"
    assert os.listdir(tmp_path) == ["f.txt"]


def test_console_entry_point(tmp_path, samples_dir):
    out = tmp_path / "m.json"
    proc = subprocess.run(
        [sys.executable, "-m", "sensorselect", "--input", str(samples_dir / "compartmental.json"),
         "--mode", "raw-system", "--metric", "Rank", "--budget", "1", "--output", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("ok: score=3.0 sensors=[x1]")
