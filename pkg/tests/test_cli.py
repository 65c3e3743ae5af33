from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from ddenoise.cli import EXIT_FAIL, EXIT_IO, EXIT_OK, EXIT_USAGE, OUT_DIR_ENV, main, parse_args


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestParsing:
    def test_defaults(self):
        job = parse_args(["theory-sweep", "--mu", "1"])
        assert job.command == "theory-sweep" and job.seed == 0 and job.threads == 1
        assert job.mu == 1.0 and job.d == 1000 and job.points == 101
        assert job.out_dir == Path(".")

    def test_validate_defaults(self):
        job = parse_args(["validate"])
        assert job.gate is None and job.scale == "desk" and not job.no_files

    def test_repeated_gate(self):
        job = parse_args(["validate", "--gate", "p-mu-sign", "--gate", "baseline-regression"])
        assert job.gate == ["p-mu-sign", "baseline-regression"]

    def test_config_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"mu": 2.0, "d": 50, "seed": 7, "points": 9}))
        job = parse_args(["theory-sweep", "--config", str(cfg), "--d", "60"])
        assert job.mu == 2.0 and job.d == 60 and job.seed == 7 and job.points == 9

    def test_env_out_dir(self, monkeypatch, tmp_path):
        monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path))
        assert parse_args(["validate"]).out_dir == tmp_path
        assert parse_args(["validate", "--out-dir", "x"]).out_dir == Path("x")

    def test_relative_paths_resolve_under_out_dir(self, tmp_path):
        job = parse_args(["theory-sweep", "--mu", "1", "--out-dir", str(tmp_path)])
        assert job.path("a.csv") == tmp_path / "a.csv"
        assert job.path("/abs/a.csv") == Path("/abs/a.csv")


class TestExitCodes:
    @pytest.mark.parametrize("argv", [
        ["mc-sweep", "--mu", "1", "--trials", "0"],
        ["mc-sweep", "--mu", "1", "--trials", "1"],
        ["theory-sweep"],
        ["theory-sweep", "--mu", "1", "--bogus"],
        ["theory-sweep", "--mu", "1", "--threads", "0"],
        ["peak", "--mu", "1", "--c-max", "1.2"],
        ["optimal-sigma", "--c", "1.5", "--mu", "1"],
        ["training-curve", "--mu", "1", "--points", "4"],
        ["baseline", "--c", "1"],
        ["validate", "--gate", "nope"],
        [],
    ])
    def test_usage(self, argv, capsys):
        code, _, err = run(argv, capsys)
        assert code == EXIT_USAGE and err

    def test_bad_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"wibble": 1}')
        assert run(["theory-sweep", "--config", str(cfg)], capsys)[0] == EXIT_USAGE
        cfg.write_text("{not json")
        assert run(["theory-sweep", "--config", str(cfg)], capsys)[0] == EXIT_USAGE

    def test_missing_config(self, tmp_path, capsys):
        code, _, _ = run(["theory-sweep", "--mu", "1", "--config", str(tmp_path / "no.json")], capsys)
        assert code == EXIT_IO

    def test_unwritable_output(self, tmp_path, capsys):
        code, _, err = run(["theory-sweep", "--mu", "1", "--points", "5",
                            "--out", str(tmp_path / "no" / "x.csv")], capsys)
        assert code == EXIT_IO and "I/O error" in err

    def test_failing_gate(self, tmp_path, capsys):
        code, out, _ = run(["validate", "--gate", "p-mu-sign", "--scale", "quick",
                            "--out-dir", str(tmp_path)], capsys)
        assert code == EXIT_FAIL and "[FAIL]" in out

    def test_passing_gate_writes_files(self, tmp_path, capsys):
        code, out, _ = run(["validate", "--gate", "branch-continuity", "--scale", "quick",
                            "--out-dir", str(tmp_path)], capsys)
        assert code == EXIT_OK and "1/1 gates passed" in out
        assert (tmp_path / "validate_report.txt").exists()


class TestCommands:
    def test_theory_sweep_outputs(self, tmp_path, capsys):
        code, out, _ = run(["theory-sweep", "--mu", "1", "--points", "20", "--c-max", "0.95",
                            "--out-dir", str(tmp_path), "--out", "s.csv", "--svg", "s.svg"], capsys)
        assert code == EXIT_OK
        assert out.startswith("# ddenoise theory-sweep seed=0 threads=1")
        assert (tmp_path / "s.csv").read_text().count("\n") == 21
        assert "peak-estimate" in (tmp_path / "s.svg").read_text()

    def test_peak(self, capsys):
        code, out, _ = run(["peak", "--mu", "2"], capsys)
        assert code == EXIT_OK
        line = next(x for x in out.splitlines() if x.startswith("refined_peak="))
        assert abs(float(line.split()[0].split("=")[1]) - 0.2119) < 1e-3

    def test_optimal_sigma(self, capsys):
        code, out, _ = run(["optimal-sigma", "--c", "0.5", "--mu", "1"], capsys)
        assert code == EXIT_OK
        val = float(out.split("optimal_sigma_sq=")[1].split()[0])
        assert abs(val - 3313.12) < 0.01

    def test_joint_single(self, tmp_path, capsys):
        code, out, _ = run(["joint-grid", "--c", "0.5", "--mu-points", "21", "--sigma-points", "10",
                            "--out", str(tmp_path / "g.csv")], capsys)
        assert code == EXIT_OK and "sigma_at_top=True" in out
        assert (tmp_path / "g.csv").read_text().count("\n") == 1 + 21 * 10

    def test_training_curve(self, tmp_path, capsys):
        code, out, _ = run(["training-curve", "--mu", "1", "--d3-out", str(tmp_path / "d3.csv")],
                           capsys)
        assert code == EXIT_OK and "0.52" in out
        assert (tmp_path / "d3.csv").read_text().startswith("coordinate,third_derivative,seed\n")

    def test_baseline(self, capsys):
        code, out, _ = run(["baseline", "--d", "20", "--trials", "50"], capsys)
        assert code == EXIT_OK and "theory=1" in out

    def test_mc_sweep_thread_invariant(self, tmp_path, capsys):
        files = []
        for th in (1, 3):
            f = tmp_path / f"m{th}.csv"
            code, _, _ = run(["mc-sweep", "--mu", "1", "--d", "20", "--n-tst", "20", "--points", "4",
                              "--trials", "6", "--seed", "5", "--threads", str(th), "--out", str(f)],
                             capsys)
            assert code == EXIT_OK
            files.append(f.read_bytes())
        assert files[0] == files[1]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ddenoise", "theory-sweep", "--mu", "1",
                           "--points", "3"], capture_output=True, text=True)
    assert proc.returncode == 0 and "3 grid points" in proc.stdout
