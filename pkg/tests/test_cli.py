import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from trendbreak import cli
from trendbreak.hwsim import LbiAccelerator
from trendbreak.signal import BreakProfile, synthesize_profile, write_signal_csv


def run(*argv):
    return cli.main([str(a) for a in argv])


def load(path):
    return json.loads(path.read_text())


@pytest.fixture
def step_csv(tmp_path):
    path = tmp_path / "step.csv"
    write_signal_csv(synthesize_profile(BreakProfile(10, {5: 1.0}), 0.0, seed=0), path)
    return path


class TestDetect:
    def test_noiseless_step(self, tmp_path, step_csv):
        assert run("detect", step_csv, "--lam", 1.0, "--out-dir", tmp_path / "out") == 0
        report = load(tmp_path / "out" / "report.json")
        assert report["support"] == [5]
        assert report["magnitudes"] == [1.0]
        assert report["domain"] == "double" and report["iterations"] == 6500
        assert set(report) == {"support", "magnitudes", "scale_factor", "iterations", "lambda", "domain",
                               "saturation_events", "debiased"}

    def test_byte_identical_reruns(self, tmp_path, step_csv):
        for name in ("a", "b"):
            assert run("detect", step_csv, "--lam", 1.0, "--domain", "fixed", "--out-dir", tmp_path / name) == 0
        assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()

    def test_json_input(self, tmp_path):
        sig = synthesize_profile(BreakProfile(12, {3: 2.0}), 0.0, seed=0)
        (tmp_path / "s.json").write_text(json.dumps(sig.to_dict()))
        assert run("--out-dir", tmp_path, "detect", tmp_path / "s.json", "--lam", 1.0) == 0
        report = load(tmp_path / "report.json")
        assert report["support"] == [3] and report["magnitudes"][0] == pytest.approx(2.0, abs=1e-12)
        assert report["scale_factor"] == 2.0

    def test_domains_agree_on_testbench(self, tmp_path):
        assert run("gen-profile", "--n", 200, "--breaks", 5, "--seed", 3, "--out-dir", tmp_path) == 0
        supports = {}
        for domain in ("double", "fixed"):
            out = tmp_path / domain
            assert run("detect", tmp_path / "signal.csv", "--lam", 1.0, "--domain", domain,
                       "--threshold", 0.05, "--relative-threshold", "--out-dir", out) == 0
            report = load(out / "report.json")
            supports[domain] = {s for s, m in zip(report["support"], report["magnitudes"]) if abs(m) > 0.25}
        truth = {b["index"] for b in load(tmp_path / "profile.json")["breaks"]}
        assert supports["double"] == supports["fixed"] == truth

    def test_no_ols(self, tmp_path, step_csv):
        assert run("detect", step_csv, "--lam", 1.0, "--no-ols", "--out-dir", tmp_path) == 0
        assert load(tmp_path / "report.json")["debiased"] is False

    def test_missing_file(self, tmp_path, capsys):
        assert run("detect", tmp_path / "nope.csv", "--lam", 1.0, "--out-dir", tmp_path) == cli.EXIT_INPUT
        assert "cannot read" in capsys.readouterr().err

    def test_all_zero_input(self, tmp_path):
        (tmp_path / "z.csv").write_text("y\n0\n0\n")
        assert run("detect", tmp_path / "z.csv", "--lam", 1.0, "--out-dir", tmp_path) == cli.EXIT_INPUT

    def test_bad_format(self, tmp_path, step_csv):
        assert run("detect", step_csv, "--lam", 1.0, "--format", "q4", "--out-dir", tmp_path) == cli.EXIT_INPUT

    def test_conflicting_budgets(self, tmp_path, step_csv):
        code = run("detect", step_csv, "--lam", 1.0, "--iterations", 5, "--iterations-per-sample", 5, "--out-dir", tmp_path)
        assert code == cli.EXIT_INPUT

    def test_usage_error(self):
        assert run("detect") == 2


class TestSimulateHw:
    @pytest.mark.parametrize("n,m,l,expected", [(10, 4, 10, 155), (100, 4, 100, 4721), (1000, 128, 1000, 26269)])
    def test_validation_cycles(self, tmp_path, n, m, l, expected):
        code = run("simulate-hw", "--n", n, "--breaks", 2, "--m", m, "--iterations", l, "--lam", 1.0, "--out-dir", tmp_path)
        assert code == 0
        report = load(tmp_path / "report.json")
        assert report["cycles"] == {"simulated": expected, "predicted": expected, "match": True}
        assert report["bit_equal"] is True and report["domain"] == "fixed"
        assert load(tmp_path / "trace_summary.json")["total_cycles"] == expected
        with open(tmp_path / "trace.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == l
        golden = load(tmp_path / "golden.json")
        assert len(golden["beta"]) == n

    def test_input_file(self, tmp_path, step_csv):
        assert run("simulate-hw", step_csv, "--m", 3, "--lam", 1.0, "--out-dir", tmp_path) == 0
        report = load(tmp_path / "report.json")
        assert report["support"] == [5]
        assert report["magnitudes"][0] == pytest.approx(1.0, abs=1e-12)

    def test_mismatch_aborts(self, tmp_path, monkeypatch):
        class Faulty(LbiAccelerator):
            # corrupts v[1] after the third iteration; beta is rebuilt from v, v is not
            def run_iteration(self):
                rec = super().run_iteration()
                if self.i == 4:
                    self.bram.cells[self.config.v_ap, 0] += 1
                return rec

        monkeypatch.setattr(cli, "LbiAccelerator", Faulty)
        code = run("simulate-hw", "--n", 8, "--breaks", 2, "--m", 2, "--iterations", 16, "--lam", 0.5,
                   "--out-dir", tmp_path)
        assert code == cli.EXIT_INTERNAL
        dump = load(tmp_path / "divergence.json")
        assert dump["iteration"] == 3 and dump["k"] == 3 and dump["first_index"] == 1
        assert dump["simulator"]["v"][0] == dump["golden"]["v"][0] + 1
        assert not (tmp_path / "report.json").exists()
        assert not (tmp_path / "simulate-hw.manifest.json").exists()

    def test_bad_testbench(self, tmp_path):
        assert run("simulate-hw", "--n", 5, "--m", 2, "--lam", 1.0, "--out-dir", tmp_path) == cli.EXIT_INPUT


class TestGenProfile:
    def test_deterministic_files(self, tmp_path):
        for name in ("a", "b"):
            assert run("gen-profile", "--n", 50, "--breaks", 4, "--seed", 9, "--out-dir", tmp_path / name) == 0
        for f in ("profile.json", "signal.json", "signal.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        assert len(load(tmp_path / "a" / "profile.json")["breaks"]) == 4

    def test_too_many_breaks(self, tmp_path):
        assert run("gen-profile", "--n", 5, "--breaks", 6, "--out-dir", tmp_path) == cli.EXIT_INPUT


class TestSweep:
    def test_m_axis_step_ups(self, tmp_path):
        assert run("sweep-cycles", "--axis", "m", "--n", 10000, "--out-dir", tmp_path) == 0
        with open(tmp_path / "sweep.csv") as fh:
            rows = [(int(r["m"]), int(r["cycles"])) for r in csv.DictReader(fh)]
        assert [m for m, _ in rows] == list(range(1, 2049))
        cycles = dict(rows)
        # at large m the extra tree stage outweighs the saved row reads
        for m in (128, 256, 512, 1024):
            assert cycles[m + 1] > cycles[m]
        assert cycles[2048] < cycles[64] < cycles[1]

    def test_n_axis_with_device(self, tmp_path):
        code = run("sweep-cycles", "--axis", "n", "--start", 1000, "--stop", 20000, "--step", 1000,
                   "--m", 1024, "--device", "stratix-v", "--out-dir", tmp_path)
        assert code == 0
        with open(tmp_path / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        cycles = [int(r["cycles"]) for r in rows]
        assert all(a < b for a, b in zip(cycles, cycles[1:]))
        row = next(r for r in rows if r["n"] == "10000")
        assert float(row["seconds"]) == pytest.approx(1.903, abs=1e-3)

    def test_unknown_device(self, tmp_path):
        assert run("sweep-cycles", "--axis", "n", "--values", 10, "--device", "asic", "--out-dir", tmp_path) == 2

    def test_empty_range(self, tmp_path):
        assert run("sweep-cycles", "--axis", "m", "--start", 5, "--stop", 4, "--out-dir", tmp_path) == 2


class TestExperiment:
    def test_small_run(self, tmp_path):
        code = run("experiment-accuracy", "--n", 60, "--trials", 3, "--breaks", 3,
                   "--iterations-per-sample", 50, 300, "--out-dir", tmp_path)
        assert code == 0
        with open(tmp_path / "accuracy.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2 * 2 * 2
        assert {r["trials"] for r in rows} == {"3"}
        summary = load(tmp_path / "accuracy_summary.json")
        assert summary["saturation_events"] == 0
        assert set(summary["relative_domain_gap"]) <= {"50", "300"}

    def test_exact_recovery_single_trial(self, tmp_path):
        code = run("experiment-accuracy", "--n", 80, "--trials", 1, "--breaks", 1, "--sigma", 0,
                   "--iterations-per-sample", 650, "--out-dir", tmp_path)
        assert code == 0
        with open(tmp_path / "accuracy.csv") as fh:
            row = next(r for r in csv.DictReader(fh) if r["estimator"] == "ols" and r["domain"] == "double")
        assert float(row["mean_squared_error"]) < 1e-6

    def test_zero_trials(self, tmp_path):
        assert run("experiment-accuracy", "--trials", 0, "--out-dir", tmp_path) == cli.EXIT_INPUT


class TestPlumbing:
    def test_manifest(self, tmp_path, step_csv):
        assert run("detect", step_csv, "--lam", 1.0, "--out-dir", tmp_path) == 0
        manifest = load(tmp_path / "detect.manifest.json")
        assert manifest["command"] == "detect" and manifest["version"] == "0.1.0"
        assert manifest["parameters"]["lam"] == 1.0
        assert manifest["inputs"][str(step_csv)] == hashlib.sha256(step_csv.read_bytes()).hexdigest()
        digest = hashlib.sha256((tmp_path / "report.json").read_bytes()).hexdigest()
        assert manifest["outputs"] == {"report.json": digest}
        assert manifest["started"] and manifest["finished"]

    def test_manifest_reproduces(self, tmp_path):
        assert run("gen-profile", "--n", 30, "--breaks", 2, "--seed", 5, "--out-dir", tmp_path / "a") == 0
        params = load(tmp_path / "a" / "gen-profile.manifest.json")["parameters"]
        argv = ["gen-profile", "--out-dir", tmp_path / "b"]
        for key in ("n", "breaks", "mag_low", "mag_high", "sigma", "seed"):
            argv += ["--" + key.replace("_", "-"), params[key]]
        assert run(*argv) == 0
        first = load(tmp_path / "a" / "gen-profile.manifest.json")["outputs"]
        assert load(tmp_path / "b" / "gen-profile.manifest.json")["outputs"] == first

    def test_env_output_dir(self, tmp_path, step_csv, monkeypatch):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
        assert run("detect", step_csv, "--lam", 1.0) == 0
        assert (tmp_path / "env" / "report.json").exists()

    def test_flag_beats_env(self, tmp_path, step_csv, monkeypatch):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
        assert run("detect", step_csv, "--lam", 1.0, "--out-dir", tmp_path / "flag") == 0
        assert (tmp_path / "flag" / "report.json").exists()
        assert not (tmp_path / "env").exists()

    def test_config_file(self, tmp_path, step_csv):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[detect]\nlam = 0.5\ndomain = fixed\nols = false\n")
        assert run("--config", cfg, "detect", step_csv, "--out-dir", tmp_path) == 0
        report = load(tmp_path / "report.json")
        assert report["lambda"] == 0.5 and report["domain"] == "fixed" and report["debiased"] is False

    def test_command_line_beats_config(self, tmp_path, step_csv):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[detect]\nlam = 0.5\n")
        assert run("--config", cfg, "detect", step_csv, "--lam", 0.25, "--out-dir", tmp_path) == 0
        assert load(tmp_path / "report.json")["lambda"] == 0.25

    def test_config_list_option(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[experiment-accuracy]\niterations-per-sample = 20, 40\ntrials = 2\nn = 30\nbreaks = 2\n")
        assert run("--config", cfg, "experiment-accuracy", "--out-dir", tmp_path) == 0
        with open(tmp_path / "accuracy.csv") as fh:
            assert {r["iterations_per_sample"] for r in csv.DictReader(fh)} == {"20", "40"}

    @pytest.mark.parametrize("text", ["[detect]\nspeed = 3\n", "[detect]\nols = maybe\n"])
    def test_bad_config(self, tmp_path, step_csv, text):
        cfg = tmp_path / "run.ini"
        cfg.write_text(text)
        assert run("--config", cfg, "detect", step_csv, "--lam", 1.0, "--out-dir", tmp_path) == cli.EXIT_INPUT

    def test_missing_config(self, tmp_path, step_csv):
        assert run("--config", tmp_path / "none.ini", "detect", step_csv, "--lam", 1.0) == cli.EXIT_INPUT

    def test_console_entry(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "trendbreak", "--version"], capture_output=True, text=True)
        assert proc.returncode == 0 and proc.stdout.strip() == "0.1.0"
