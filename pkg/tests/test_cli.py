import json
import os
from pathlib import Path

import numpy as np
import pytest

from spdelab.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, name="small.toml", **overrides):
    base = {
        "m": 12,
        "steps": 48,
        "T": 0.25,
        "ensemble": 8,
        "schedule": [2, 4, 8],
        "lambda": 0.25,
        "metrics": '["sup_C", "compensated_holder"]',
        "xi_n": "sin(pi * x) + sin(pi * x) / n",
    }
    base.update(overrides)
    text = f"""
[problem]
x_lo = 0.0
x_hi = 1.0
m = {base["m"]}
r = 2.0
a = "1"
b = "0"
f = "u / (1 + abs(u))"
g = ["0.2 * cos(u)", "0.1 * sin(u)"]
xi = "sin(pi * x)"
T = {base["T"]}
steps = {base["steps"]}
kappa = 0.5
c_bound = 2.0
lip_f = 1.1
growth_f = 1.1
lip_g = 0.5
growth_g = 1.0

[approximation]
mode = "coefficients"
schedule = {base["schedule"]}
xi_n = "{base["xi_n"]}"

[norms]
metrics = {base["metrics"]}
lambda = {base["lambda"]}
p = 8.0
q = 2.0

[run]
ensemble = {base["ensemble"]}
seed = 11
strict = true
"""
    path = tmp_path / name
    path.write_text(text)
    return path


class TestConverge:
    def test_writes_reports_and_exits_zero(self, tmp_path, capsys):
        config = write_config(tmp_path)
        out = tmp_path / "out"
        code = main(["converge", str(config), "--out-dir", str(out)])
        assert code == 0
        assert (out / "small_report.csv").exists()
        assert (out / "small_report.json").exists()
        assert (out / "small_report.png").exists()
        report = json.loads((out / "small_report.json").read_text())
        assert set(report["verdicts"]) == {"sup_C", "compensated_holder"}
        csv_text = (out / "small_report.csv").read_text()
        assert csv_text.startswith("mode,n,metric,lambda_or_alpha,q,estimate,std_error,samples")
        captured = capsys.readouterr()
        assert "sup_C" in captured.out

    def test_reports_byte_identical_across_runs(self, tmp_path):
        config = write_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["converge", str(config), "--out-dir", str(out1)]) == 0
        assert main(["converge", str(config), "--out-dir", str(out2)]) == 0
        for name in ("small_report.csv", "small_report.json", "small_report.png"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_invalid_lambda_exits_2_citing_window(self, tmp_path, capsys):
        config = write_config(tmp_path, **{"lambda": 0.6})
        code = main(["converge", str(config), "--out-dir", str(tmp_path / "out")])
        assert code == 2
        err = capsys.readouterr().err
        assert "1/2 - 1/p" in err
        assert not (tmp_path / "out").exists()  # nothing written on failure

    def test_trivial_sequence_reports_zero_estimates(self, tmp_path):
        config = write_config(tmp_path, xi_n="sin(pi * x)")
        out = tmp_path / "out"
        assert main(["converge", str(config), "--out-dir", str(out)]) == 0
        report = json.loads((out / "small_report.json").read_text())
        assert all(row["estimate"] == 0.0 for row in report["rows"])
        assert all(v == "converged_below_noise_floor" for v in report["verdicts"].values())

    def test_negative_control_exits_1(self, tmp_path, capsys):
        code = main([
            "converge", str(CONFIGS / "kappa_breach.toml"),
            "--out-dir", str(tmp_path / "out"),
        ])
        assert code == 1
        assert "(i)" in capsys.readouterr().err

    def test_missing_config_exits_2(self, tmp_path, capsys):
        assert main(["converge", str(tmp_path / "nope.toml")]) == 2


class TestSimulate:
    def test_deterministic_bytes(self, tmp_path):
        config = write_config(tmp_path)
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        assert main(["simulate", str(config), "--stream-id", "3", "--out-dir", str(out1)]) == 0
        assert main(["simulate", str(config), "--stream-id", "3", "--out-dir", str(out2)]) == 0
        name = "small_trajectory_3.csv"
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_header_and_shape(self, tmp_path):
        config = write_config(tmp_path, m=5, steps=16)
        out = tmp_path / "out"
        assert main(["simulate", str(config), "--stream-id", "0", "--out-dir", str(out)]) == 0
        lines = (out / "small_trajectory_0.csv").read_text().strip().split("\n")
        assert lines[0] == "t,x_1,x_2,x_3,x_4,x_5"
        assert len(lines) == 1 + 17

    def test_stream_changes_values_not_shape(self, tmp_path):
        config = write_config(tmp_path, m=5, steps=16)
        out = tmp_path / "out"
        main(["simulate", str(config), "--stream-id", "0", "--out-dir", str(out)])
        main(["simulate", str(config), "--stream-id", "1", "--out-dir", str(out)])
        a = (out / "small_trajectory_0.csv").read_text().strip().split("\n")
        b = (out / "small_trajectory_1.csv").read_text().strip().split("\n")
        assert a[0] == b[0] and len(a) == len(b)
        assert a[1:] != b[1:]

    def test_pure_semigroup_rows_match_orbit(self, tmp_path):
        text = f"""
[problem]
x_lo = 0.0
x_hi = 1.0
m = 4
r = 2.0
a = "1"
b = "0"
f = "0 * u"
g = ["0 * u"]
xi = "sin(pi * x)"
T = 0.25
steps = 8
kappa = 0.5
c_bound = 2.0
lip_f = 0.1
growth_f = 0.1
lip_g = 0.1
growth_g = 0.1

[approximation]
mode = "yosida"
schedule = [4, 8, 16]

[norms]
metrics = ["sup_C"]
p = 8.0
q = 2.0

[run]
ensemble = 4
seed = 7
strict = true
"""
        config = tmp_path / "pure.toml"
        config.write_text(text)
        out = tmp_path / "out"
        assert main(["simulate", str(config), "--stream-id", "0", "--out-dir", str(out)]) == 0
        rows = np.loadtxt(out / "pure_trajectory_0.csv", delimiter=",", skiprows=1)
        from spdelab.grids import TimeGrid, build_grid
        from spdelab.operators import CoefficientField, SemigroupEvaluator, assemble_divergence_form
        from spdelab.solver import semigroup_orbit

        grid = build_grid(0.0, 1.0, 4, 2.0)
        gen = assemble_divergence_form(grid, CoefficientField(
            a=lambda x: np.ones_like(np.asarray(x)), b=lambda x: 0.0 * np.asarray(x),
            kappa=0.5, c_bound=2.0))
        orbit = semigroup_orbit(SemigroupEvaluator(gen), np.sin(np.pi * grid.nodes),
                                TimeGrid(T=0.25, steps=8))
        np.testing.assert_allclose(rows[:, 1:], orbit, atol=1e-12)


class TestCheck:
    @pytest.mark.parametrize("suite", ["semigroup", "gamma", "norms"])
    def test_fast_suites_pass(self, suite, capsys):
        assert main(["check", suite]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_unknown_suite_exits_2(self, capsys):
        assert main(["check", "foo"]) == 2


class TestGamma:
    def test_random_operator_record(self, capsys):
        assert main(["gamma", "--m", "6", "--r", "2.0", "--rank", "2", "--seed", "4"]) == 0
        record = json.loads(capsys.readouterr().out)
        assert set(record) == {"op", "inputs_digest", "value", "std_error", "samples", "seed"}
        assert record["std_error"] == 0.0  # r = 2 is exact

    def test_images_csv(self, tmp_path, capsys):
        images = tmp_path / "images.csv"
        images.write_text("1.0,0.0,0.0\n0.0,2.0,0.0\n")
        assert main(["gamma", "--m", "3", "--r", "2.0", "--images", str(images)]) == 0
        record = json.loads(capsys.readouterr().out)
        # rows orthogonal: gamma norm is the root sum of squared L2 norms
        h = 0.25
        expected = np.sqrt(h * 1.0 + h * 4.0)
        assert record["value"] == pytest.approx(expected, rel=1e-12)

    def test_bad_images_exit_2(self, tmp_path, capsys):
        images = tmp_path / "images.csv"
        images.write_text("1.0,0.0\n")
        assert main(["gamma", "--m", "3", "--images", str(images)]) == 2
