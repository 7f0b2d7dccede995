"""Command-line behaviour: every subcommand, output formats, exit codes."""

import csv
import io
import json
import os
import random
import subprocess
import sys
import time

import pytest

from obnn.cli import main
from obnn.model import load_model


@pytest.fixture
def toy_model(tmp_path):
    path = tmp_path / "toy.fbnn"
    rc = main([
        "gen-model", "--dims", "12x3",
        "--layers", "conv:4,3;pool:2;fc:6;out:4",
        "--sparsity", "0.3", "--seed", "11", "--out", str(path),
    ])
    assert rc == 0
    return path


@pytest.fixture
def arch_file(tmp_path):
    path = tmp_path / "arch.json"
    path.write_text(json.dumps({
        "dim": 1,
        "input_dims": [800, 5],
        "stages": [
            {"g": 20, "kernel": [10], "pool": 4},
            {"g": 20, "kernel": [10], "pool": 4},
            {"g": 20, "kernel": [10]},
            {"g": 20, "kernel": [10]},
            {"g": 20, "kernel": [10]},
        ],
    }))
    return path


class TestGenModel:
    def test_writes_loadable_file(self, toy_model):
        model = load_model(toy_model.read_bytes())
        assert model.input_size == 36 and model.class_count == 4

    def test_seed_reproducible(self, tmp_path):
        p1, p2 = tmp_path / "a.fbnn", tmp_path / "b.fbnn"
        args = ["gen-model", "--dims", "8x2", "--layers", "conv:3,3;out:2",
                "--seed", "4"]
        assert main(args + ["--out", str(p1)]) == 0
        assert main(args + ["--out", str(p2)]) == 0
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_layer_string(self, tmp_path, capsys):
        rc = main(["gen-model", "--dims", "8x2", "--layers", "conv:",
                   "--out", str(tmp_path / "x.fbnn")])
        assert rc == 2
        assert "error" in capsys.readouterr().err


class TestCompile:
    def test_table_output_and_circuit_file(self, toy_model, tmp_path, capsys):
        out = tmp_path / "toy.circ"
        rc = main(["compile", "--model", str(toy_model), "--obc", "lba",
                   "--out", str(out)])
        assert rc == 0
        text = capsys.readouterr().out
        assert "total" in text and "sha256" in text
        assert out.read_text().startswith("CIRC v1 ")

    def test_json_format(self, toy_model, capsys):
        rc = main(["compile", "--model", str(toy_model), "--format", "json"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["nonxor"] > 0
        assert payload["evaluator_inputs"] == 36
        assert len(payload["sha256"]) == 64

    def test_kind_changes_gate_count(self, toy_model, capsys):
        counts = {}
        for kind in ("ta", "blb", "lba"):
            main(["compile", "--model", str(toy_model), "--obc", kind,
                  "--format", "json"])
            counts[kind] = json.loads(capsys.readouterr().out)["nonxor"]
        assert counts["lba"] <= counts["blb"] <= counts["ta"]

    def test_missing_model_is_usage_error(self, capsys):
        assert main(["compile", "--model", "/nonexistent.fbnn"]) == 2


class TestBench:
    def test_csv_columns(self, capsys):
        rc = main(["bench-obc", "--sizes", "16,40", "--kinds", "ta,blb,lba",
                   "--seed", "1"])
        assert rc == 0
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert len(rows) == 6
        assert list(rows[0]) == [
            "n", "kind", "nonxor", "xor",
            "lower_bound", "upper_bound", "bytes", "wall_us",
        ]
        for row in rows:
            assert int(row["nonxor"]) > 0
            assert int(row["bytes"]) > 0
            assert int(row["wall_us"]) > 0

    def test_power_of_two_ta_bound_exact(self, capsys):
        main(["bench-obc", "--sizes", "16", "--kinds", "ta", "--seed", "1"])
        row = next(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert row["lower_bound"] == row["upper_bound"] == row["nonxor"]

    def test_blb_bounds_bracket_count(self, capsys):
        main(["bench-obc", "--sizes", "300", "--kinds", "blb", "--seed", "1"])
        row = next(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert int(row["lower_bound"]) < int(row["nonxor"]) < int(row["upper_bound"])


class TestInfer:
    def test_local_json(self, toy_model, capsys):
        rc = main(["infer", "--model", str(toy_model), "--random-input",
                   "--seed", "5", "--ot", "stub", "--format", "json"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert set(payload) == {"scores", "argmax", "report"}
        assert set(payload["report"]) == {
            "nonxor", "xor", "bytes_sent", "bytes_received", "rounds", "wall_ms",
        }
        assert payload["report"]["rounds"] == 3

    def test_input_file(self, toy_model, tmp_path, capsys):
        model = load_model(toy_model.read_bytes())
        path = tmp_path / "input.txt"
        path.write_text(" ".join(["1", "-1"] * (model.input_size // 2)))
        rc = main(["infer", "--model", str(toy_model), "--input", str(path),
                   "--ot", "stub", "--format", "json"])
        assert rc == 0
        assert json.loads(capsys.readouterr().out)["scores"]

    def test_seed_gives_same_scores(self, toy_model, capsys):
        args = ["infer", "--model", str(toy_model), "--random-input",
                "--seed", "5", "--ot", "stub", "--format", "json"]
        main(args)
        first = json.loads(capsys.readouterr().out)["scores"]
        main(args)
        second = json.loads(capsys.readouterr().out)["scores"]
        assert first == second

    def test_report_file(self, toy_model, tmp_path):
        report = tmp_path / "report.json"
        rc = main(["infer", "--model", str(toy_model), "--random-input",
                   "--seed", "2", "--ot", "stub", "--report", str(report)])
        assert rc == 0
        assert set(json.loads(report.read_text())) == {
            "nonxor", "xor", "bytes_sent", "bytes_received", "rounds", "wall_ms",
        }

    def test_missing_input_is_usage_error(self, toy_model, capsys):
        assert main(["infer", "--model", str(toy_model), "--ot", "stub"]) == 2

    def test_tcp_roles_agree_with_local(self, toy_model, capsys):
        main(["infer", "--model", str(toy_model), "--random-input",
              "--seed", "5", "--ot", "stub", "--format", "json"])
        local = json.loads(capsys.readouterr().out)["scores"]

        port = 30000 + random.randrange(20000)
        garbler = subprocess.Popen(
            [sys.executable, "-m", "obnn.cli", "infer", "--model",
             str(toy_model), "--role", "garbler",
             "--addr", f"127.0.0.1:{port}", "--ot", "stub"],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
        )
        try:
            rc, out = 3, ""
            for _ in range(100):  # connection refused until the listener is up
                proc = subprocess.run(
                    [sys.executable, "-m", "obnn.cli", "infer", "--model",
                     str(toy_model), "--role", "evaluator",
                     "--addr", f"127.0.0.1:{port}", "--random-input",
                     "--seed", "5", "--ot", "stub", "--format", "json"],
                    capture_output=True, text=True, timeout=60,
                )
                rc, out = proc.returncode, proc.stdout
                if rc != 3:
                    break
                time.sleep(0.1)
            assert rc == 0, proc.stderr
            assert garbler.wait(timeout=30) == 0
        finally:
            garbler.kill()
        assert json.loads(out)["scores"] == local


class TestVerify:
    def test_clean_model_passes(self, toy_model, capsys):
        rc = main(["verify", "--model", str(toy_model), "--trials", "5",
                   "--seed", "9"])
        assert rc == 0
        assert "PASS" in capsys.readouterr().out

    def test_zero_trials_vacuous(self, toy_model, capsys):
        rc = main(["verify", "--model", str(toy_model), "--trials", "0"])
        assert rc == 0
        captured = capsys.readouterr()
        assert "vacuous" in captured.out and "warning" in captured.err

    def test_injected_fault_detected_and_localized(self, toy_model, capsys):
        rc = main(["verify", "--model", str(toy_model), "--trials", "20",
                   "--seed", "3", "--inject-fault"])
        captured = capsys.readouterr()
        assert rc == 1
        assert "FAIL" in captured.out
        assert "first divergence: layer" in captured.out
        assert "injected fault" in captured.err

    @pytest.mark.parametrize("obc", ["ta", "blb", "lba"])
    def test_all_kinds(self, toy_model, obc):
        assert main(["verify", "--model", str(toy_model), "--obc", obc,
                     "--trials", "3", "--seed", "1"]) == 0


class TestExplore:
    def test_csv_variants(self, arch_file, capsys):
        rc = main(["explore", "--arch", str(arch_file)])
        assert rc == 0
        captured = capsys.readouterr()
        rows = list(csv.DictReader(io.StringIO(captured.out)))
        assert len(rows) == 13
        assert all(row["delta"] == "0" for row in rows)
        assert "skipped" in captured.err

    def test_json_includes_arch_and_skips(self, arch_file, capsys):
        rc = main(["explore", "--arch", str(arch_file), "--format", "json"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["base_cost"] == 2_200_000
        assert len(payload["variants"]) == 13
        assert len(payload["skipped"]) == 2
        assert all(v["total_cost"] == 2_200_000 for v in payload["variants"])

    def test_moves_filter_and_limit(self, arch_file, capsys):
        rc = main(["explore", "--arch", str(arch_file),
                   "--moves", "add_layer", "--limit", "2"])
        assert rc == 0
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert len(rows) == 2
        assert all(r["variant"].startswith("add_layer") for r in rows)

    def test_bad_json_usage_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        assert main(["explore", "--arch", str(bad)]) == 2


class TestEntryPoint:
    def test_console_script_exists(self):
        proc = subprocess.run(
            [sys.executable, "-m", "obnn.cli", "--help"],
            capture_output=True, text=True, timeout=30,
        )
        assert proc.returncode == 0
        assert "compile" in proc.stdout and "explore" in proc.stdout

    def test_env_seed_honoured(self, toy_model):
        base_env = {k: v for k, v in os.environ.items() if k != "OBNN_SEED"}
        env_proc = subprocess.run(
            [sys.executable, "-m", "obnn.cli", "infer", "--model",
             str(toy_model), "--random-input", "--ot", "stub",
             "--format", "json"],
            capture_output=True, text=True, timeout=60,
            env={**base_env, "OBNN_SEED": "5"},
        )
        assert env_proc.returncode == 0, env_proc.stderr
        flag_proc = subprocess.run(
            [sys.executable, "-m", "obnn.cli", "infer", "--model",
             str(toy_model), "--random-input", "--seed", "5", "--ot", "stub",
             "--format", "json"],
            capture_output=True, text=True, timeout=60, env=base_env,
        )
        assert (json.loads(env_proc.stdout)["scores"]
                == json.loads(flag_proc.stdout)["scores"])
