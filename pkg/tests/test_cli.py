import csv
import json
import os
import subprocess
import sys

import pytest

from lpmfg.cli import run_command
from lpmfg.lp import read_mps
from lpmfg.registry import get_problem
from lpmfg.tables import write_table


def run(capsys, *argv):
    code = run_command(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_solve_single_stop_now_value(tmp_path, capsys):
    code, out, _ = run(capsys, "solve-single", "--problem", "stop-now", "--grid", "6,7,1",
                       "--out", str(tmp_path))
    assert code == 0
    summary = json.loads(out)
    assert summary["value"] == pytest.approx(1.0, abs=1e-12)
    saved = json.load(open(tmp_path / "solution.json"))
    assert saved["kind"] == "single" and saved == summary
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert rows[0] == ["k", "i", "j", "value"]
    assert list(csv.reader(open(tmp_path / "mu.csv")))[0] == ["k", "i", "value"]


def test_verify_after_solve_single(tmp_path, capsys):
    args = ["--problem", "american-put-like", "--grid", "8,9,1", "--out", str(tmp_path)]
    assert run(capsys, "solve-single", *args)[0] == 0
    code, out, _ = run(capsys, "verify", *args)
    assert code == 0
    report = json.loads(out)
    assert report["overall"] is True
    assert "exploitability" not in {c["name"] for c in report["checks"]}
    assert json.load(open(tmp_path / "report.json")) == report


def test_verify_mfg_adds_exploitability(tmp_path, capsys):
    args = ["--problem", "congestion-mfg", "--grid", "8,9,3", "--out", str(tmp_path), "--tol", "1e-8",
            "--n-starts", "1"]
    assert run(capsys, "solve-mfg", *args)[0] == 0
    code, out, _ = run(capsys, "verify", *args)
    checks = {c["name"]: c for c in json.loads(out)["checks"]}
    assert checks["exploitability"]["pass"] and checks["exploitability"]["tol"] == 1e-8


def test_verify_without_measures_fails(tmp_path, capsys):
    code, out, err = run(capsys, "verify", "--out", str(tmp_path))
    assert code == 1 and out == ""
    assert json.loads(err)["error"] == "ConfigError"


def test_unknown_subcommand_exits_two(capsys):
    assert run(capsys, "frobnicate")[0] == 2


@pytest.mark.parametrize("argv, kind", [
    (["solve-single", "--problem", "no-such-problem"], "ConfigError"),
    (["solve-single", "--damping", "3"], "ConfigError"),
])
def test_errors_are_json_on_stderr(tmp_path, capsys, argv, kind):
    code, out, err = run(capsys, *argv, "--out", str(tmp_path))
    assert code == 1 and out == ""
    assert json.loads(err)["error"] == kind


def test_config_file_and_flag_override(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text(f"[run]\nproblem = never-stop\n[grid]\nt_count = 5\nx_count = 7\na_count = 1\n"
                   f"[output]\ndir = {tmp_path / 'a'}\n")
    code, out, _ = run(capsys, "dp", "--config", str(ini))
    assert code == 0 and json.loads(out)["grid"] == [5, 7, 1]
    assert (tmp_path / "a" / "value.csv").exists()
    code, out, _ = run(capsys, "dp", "--config", str(ini), "--grid", "6,7,1", "--format", "json")
    assert json.loads(out)["grid"] == [6, 7, 1]
    assert json.loads(out)["value"] == pytest.approx(1.0, abs=1e-12)
    assert "v" in json.load(open(tmp_path / "a" / "dp.json"))


def test_solve_mfg_json_trace(tmp_path, capsys):
    code, out, _ = run(capsys, "solve-mfg", "--problem", "crowd-exit-mfg", "--grid", "8,9,1",
                       "--format", "json", "--n-starts", "2", "--out", str(tmp_path))
    assert code == 0
    sol = json.load(open(tmp_path / "solution.json"))
    assert sol["kind"] == "mfg" and len(sol["starts"]) == 2
    assert sol["trace"][0]["distance"] is None
    assert (tmp_path / "measures.json").exists() and not (tmp_path / "trace.csv").exists()


def test_solve_mfg_nonconvergence_is_reported(tmp_path, capsys):
    code, _, err = run(capsys, "solve-mfg", "--problem", "congestion-mfg", "--grid", "8,9,3",
                       "--tol", "1e-14", "--max-iter", "2", "--n-starts", "1", "--out", str(tmp_path))
    assert code == 1 and json.loads(err)["error"] == "CommandError"
    assert (tmp_path / "solution.json").exists()


def test_tabulated_problem_through_cli(tmp_path, capsys):
    spec = get_problem("crowd-exit-mfg")
    table = tmp_path / "crowd.tab"
    write_table(spec, str(table), spec.make_grid(8, 9, 1))
    a = run(capsys, "solve-mfg", "--problem", str(table), "--grid", "8,9,1", "--n-starts", "1",
            "--out", str(tmp_path / "t"))
    b = run(capsys, "solve-mfg", "--problem", "crowd-exit-mfg", "--grid", "8,9,1", "--n-starts", "1",
            "--out", str(tmp_path / "r"))
    assert a[0] == b[0] == 0
    assert json.loads(a[1])["nash_value"] == pytest.approx(json.loads(b[1])["nash_value"], abs=1e-12)
    code, _, err = run(capsys, "solve-mfg", "--problem", str(table), "--grid", "9,9,1")
    assert code == 1 and "8,9,1" in json.loads(err)["message"]


def test_export_lp(tmp_path, capsys):
    code, out, _ = run(capsys, "export-lp", "--problem", "american-put-like", "--grid", "5,6,1",
                       "--out", str(tmp_path))
    assert code == 0
    info = json.loads(out)
    parsed = read_mps(str(tmp_path / "problem.mps"))
    assert info["frozen_at"] == "zero moments"
    assert len(parsed[0]) == info["n_vars"]


def test_simulate(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--problem", "american-put-like", "--grid", "6,7,1",
                       "--agents", "10,1000", "--seeds", "3", "--out", str(tmp_path))
    assert code == 0
    rows = json.loads(out)["rows"]
    assert [r["n_agents"] for r in rows] == [10, 1000]
    assert rows[1]["median_distance"] < rows[0]["median_distance"]


def test_outputs_are_bit_identical_across_runs(tmp_path, capsys):
    for d in ("a", "b"):
        assert run(capsys, "solve-mfg", "--problem", "congestion-mfg", "--grid", "8,9,3",
                   "--out", str(tmp_path / d))[0] == 0
    names = sorted(os.listdir(tmp_path / "a"))
    assert names == sorted(os.listdir(tmp_path / "b"))
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lpmfg", "dp", "--problem", "stop-now", "--grid", "4,5,1",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["command"] == "dp"
