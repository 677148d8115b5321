"""Command-line surface: file schemas, exit codes, determinism, recipes."""

import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from msbmix.cli import FitConfig, galaxy_data_path, main, read_data_csv

FAST = ["--iterations", "40", "--burn-in", "10"]


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, args, **kw):
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False, **kw)


def write_data(path, values):
    with open(path, "w") as f:
        f.write("y\n")
        for v in values:
            f.write(f"{v}\n")


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


class TestConfig:
    def test_defaults_use_calibration_target(self):
        cfg = FitConfig()
        assert cfg.alpha is None and cfg.target_expected_scale == 3.0
        assert cfg.delta == 0.5 and cfg.beta == 1.0
        assert cfg.k == 64.0 and cfg.lam == 64.0 and cfg.max_depth == 6

    def test_alpha_and_target_mutually_exclusive(self):
        with pytest.raises(ValueError):
            FitConfig(alpha=1.0, target_expected_scale=3.0)
        FitConfig(alpha=1.0, target_expected_scale=None)

    def test_json_round_trip(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({
            "schema_version": 1, "seed": 9, "iterations": 50, "burn_in": 5,
            "delta": 0.25, "lambda": 32.0,
        }))
        cfg = FitConfig.from_json(path)
        assert cfg.seed == 9 and cfg.lam == 32.0 and cfg.delta == 0.25
        echoed = cfg.to_json_dict()
        assert echoed["schema_version"] == 1 and echoed["lambda"] == 32.0

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"schema_version": 1, "bogus": 1}))
        with pytest.raises(ValueError):
            FitConfig.from_json(path)

    def test_bad_schema_version(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"schema_version": 99}))
        with pytest.raises(ValueError):
            FitConfig.from_json(path)

    def test_alpha_override_clears_target(self):
        cfg = FitConfig.from_json(None, {"alpha": 1.5, "target_expected_scale": None})
        assert cfg.alpha == 1.5 and cfg.target_expected_scale is None

    @pytest.mark.parametrize("field,value", [
        ("delta", 1.2), ("beta", 0.0), ("k", 1.0), ("lam", -1.0),
        ("max_depth", 40), ("thin", 0), ("grid_points", 1),
    ])
    def test_constraints_enforced_at_load(self, field, value):
        with pytest.raises(ValueError):
            FitConfig(**{field: value})

    def test_bad_config_exits_two(self, tmp_path):
        runner = CliRunner()
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps({"schema_version": 1, "delta": 1.5}))
        data = tmp_path / "data.csv"
        write_data(data, [0.1, 0.9, -0.3])
        res = invoke(runner, ["fit", data, "--config", cfg])
        assert res.exit_code == 2


class TestCalibrate:
    @pytest.mark.parametrize("delta,target,expected,tol", [
        (0.0, 3.0, 3.00, 1e-4),
        (0.25, 5.0, 2.25, 0.02),
        (0.5, 5.0, -0.25, 0.02),
    ])
    def test_published_values(self, runner, delta, target, expected, tol):
        res = invoke(runner, ["calibrate", "--delta", delta, "--expected-scale", target])
        assert res.exit_code == 0
        assert float(res.output.strip()) == pytest.approx(expected, abs=tol)

    def test_json_output(self, runner, tmp_path):
        out = tmp_path / "alpha.json"
        res = invoke(runner, ["calibrate", "--delta", "0", "--expected-scale", "2",
                              "--out", out])
        assert res.exit_code == 0
        assert json.loads(out.read_text())["alpha"] == pytest.approx(2.0, abs=1e-4)


class TestSimulate:
    def test_reproducible(self, runner, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            res = invoke(runner, ["simulate", "--scenario", "delta_study_1",
                                  "--n", 50, "--seed", 11, "--out", out])
            assert res.exit_code == 0
        assert (a / "data.csv").read_bytes() == (b / "data.csv").read_bytes()
        assert len(read_rows(a / "data.csv")) == 50

    def test_truth_integrates_to_one(self, runner, tmp_path):
        res = invoke(runner, ["simulate", "--scenario", "mw_06", "--n", 10,
                              "--seed", 0, "--out", tmp_path])
        assert res.exit_code == 0
        rows = read_rows(tmp_path / "truth.csv")
        x = np.array([float(r["x"]) for r in rows])
        p = np.array([float(r["pdf"]) for r in rows])
        assert np.trapezoid(p, x) == pytest.approx(1.0, abs=0.01)

    def test_unknown_scenario(self, runner):
        res = invoke(runner, ["simulate", "--scenario", "nope", "--n", 5])
        assert res.exit_code == 2


class TestFit:
    def test_outputs_and_schema(self, runner, tmp_path):
        data = tmp_path / "data.csv"
        rng = np.random.default_rng(1)
        write_data(data, rng.normal(size=50))
        out = tmp_path / "out"
        res = invoke(runner, ["fit", data, "--out", out, "--seed", 3] + FAST)
        assert res.exit_code == 0
        rows = read_rows(out / "density_summary.csv")
        assert set(rows[0]) == {"x", "mean", "lo", "hi",
                                "x_orig", "mean_orig", "lo_orig", "hi_orig"}
        assert len(rows) == 512
        diag = json.loads((out / "diagnostics.json").read_text())
        assert set(diag) == {"lpml_std", "lpml_orig", "mean_scale_weights",
                             "mean_scale_alloc", "occupied_nodes_mean"}
        assert np.isfinite(diag["lpml_std"])
        meta = json.loads((out / "chain_meta.json").read_text())
        assert meta["seed"] == 3
        assert meta["config"]["schema_version"] == 1
        assert "standardization" in meta

    def test_band_ordering(self, runner, tmp_path):
        data = tmp_path / "data.csv"
        write_data(data, np.random.default_rng(2).normal(size=40))
        out = tmp_path / "out"
        res = invoke(runner, ["fit", data, "--out", out] + FAST)
        assert res.exit_code == 0
        rows = read_rows(out / "density_summary.csv")
        for row in rows:
            assert float(row["lo"]) <= float(row["mean"]) + 1e-12
            assert float(row["mean"]) <= float(row["hi"]) + 1e-12

    def test_determinism_bytes(self, runner, tmp_path):
        data = tmp_path / "data.csv"
        write_data(data, np.random.default_rng(3).normal(size=30))
        outs = [tmp_path / "r1", tmp_path / "r2"]
        for out in outs:
            res = invoke(runner, ["fit", data, "--out", out, "--seed", 17] + FAST)
            assert res.exit_code == 0
        for name in ("density_summary.csv", "diagnostics.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_empty_csv(self, runner, tmp_path):
        data = tmp_path / "empty.csv"
        data.write_text("y\n")
        res = invoke(runner, ["fit", data])
        assert res.exit_code == 2
        assert "no observations" in res.output

    def test_constant_data_with_standardize(self, runner, tmp_path):
        data = tmp_path / "const.csv"
        write_data(data, [2.0] * 10)
        res = invoke(runner, ["fit", data])
        assert res.exit_code == 2

    def test_malformed_csv(self, runner, tmp_path):
        data = tmp_path / "bad.csv"
        data.write_text("y\nhello\n")
        res = invoke(runner, ["fit", data])
        assert res.exit_code == 2

    def test_missing_header(self, runner, tmp_path):
        data = tmp_path / "bad.csv"
        data.write_text("1.0\n2.0\n")
        res = invoke(runner, ["fit", data])
        assert res.exit_code == 2

    def test_no_standardize_keeps_single_unit_system(self, runner, tmp_path):
        data = tmp_path / "data.csv"
        write_data(data, np.random.default_rng(4).normal(size=30))
        out = tmp_path / "out"
        res = invoke(runner, ["fit", data, "--out", out, "--no-standardize"] + FAST)
        assert res.exit_code == 0
        rows = read_rows(out / "density_summary.csv")
        assert set(rows[0]) == {"x", "mean", "lo", "hi"}
        diag = json.loads((out / "diagnostics.json").read_text())
        assert diag["lpml_std"] == diag["lpml_orig"]


class TestFitGrouped:
    def grouped_csv(self, path, groups):
        rng = np.random.default_rng(5)
        with open(path, "w") as f:
            f.write("y,group\n")
            for g, n in groups.items():
                for v in rng.normal(size=n):
                    f.write(f"{v},{g}\n")

    def test_per_group_outputs(self, runner, tmp_path):
        data = tmp_path / "data.csv"
        self.grouped_csv(data, {"a": 15, "b": 12, "c": 1})
        out = tmp_path / "out"
        res = invoke(runner, ["fit-grouped", data, "--out", out] + FAST)
        assert res.exit_code == 0
        for g in ("a", "b", "c"):
            assert (out / f"density_summary_{g}.csv").exists()
        kern = read_rows(out / "shared_kernels.csv")
        assert set(kern[0]) == {"s", "h", "mu_mean", "omega_mean"}
        assert len(kern) == 2 ** 7 - 1
        diag = json.loads((out / "diagnostics.json").read_text())
        assert set(diag) == {"a", "b", "c"}

    def test_single_group_matches_plain_fit(self, runner, tmp_path):
        data = tmp_path / "plain.csv"
        values = np.random.default_rng(6).normal(size=25)
        write_data(data, values)
        gdata = tmp_path / "grouped.csv"
        with open(gdata, "w") as f:
            f.write("y,group\n")
            for v in values:
                f.write(f"{v},g0\n")
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert invoke(runner, ["fit", data, "--out", out_a, "--seed", 5] + FAST).exit_code == 0
        assert invoke(runner, ["fit-grouped", gdata, "--out", out_b, "--seed", 5] + FAST).exit_code == 0
        assert (out_a / "density_summary.csv").read_bytes() == \
            (out_b / "density_summary_g0.csv").read_bytes()

    def test_many_groups(self, runner, tmp_path):
        data = tmp_path / "data.csv"
        self.grouped_csv(data, {f"g{i:02d}": 4 for i in range(25)})
        out = tmp_path / "out"
        res = invoke(runner, ["fit-grouped", data, "--out", out,
                              "--iterations", "20", "--burn-in", "5"])
        assert res.exit_code == 0
        assert len(list(out.glob("density_summary_*.csv"))) == 25

    def test_missing_group_column(self, runner, tmp_path):
        data = tmp_path / "data.csv"
        write_data(data, [1.0, 2.0])
        res = invoke(runner, ["fit-grouped", data])
        assert res.exit_code == 2


class TestPipeline:
    def test_simulate_fit_evaluate_composes(self, runner, tmp_path):
        sim, fit = tmp_path / "sim", tmp_path / "fit"
        res = invoke(runner, ["simulate", "--scenario", "delta_study_1",
                              "--n", 60, "--seed", 8, "--out", sim,
                              "--grid-points", 201])
        assert res.exit_code == 0
        truth = read_rows(sim / "truth.csv")
        lo, hi = float(truth[0]["x"]), float(truth[-1]["x"])
        res = invoke(runner, ["fit", sim / "data.csv", "--out", fit, "--seed", 8,
                              "--no-standardize", "--grid-lo", lo, "--grid-hi", hi,
                              "--grid-points", 201] + FAST)
        assert res.exit_code == 0
        res = invoke(runner, ["evaluate", "--estimate", fit / "density_summary.csv",
                              "--truth", sim / "truth.csv"])
        assert res.exit_code == 0
        metrics = json.loads(res.output.strip().splitlines()[-1])
        assert 0.0 < metrics["l1"] < 2.0
        assert metrics["kl"] >= 0.0


class TestEvaluate:
    def make_pair(self, tmp_path, mean_shift=0.0):
        from scipy.stats import norm
        x = np.linspace(-8, 8, 2001)
        truth, est = tmp_path / "truth.csv", tmp_path / "est.csv"
        with open(truth, "w") as f:
            f.write("x,pdf\n")
            for xi, p in zip(x, norm.pdf(x)):
                f.write(f"{float(xi)!r},{float(p)!r}\n")
        with open(est, "w") as f:
            f.write("x,mean\n")
            for xi, p in zip(x, norm.pdf(x, loc=mean_shift)):
                f.write(f"{float(xi)!r},{float(p)!r}\n")
        return est, truth

    def test_identical_densities(self, runner, tmp_path):
        est, truth = self.make_pair(tmp_path, 0.0)
        res = invoke(runner, ["evaluate", "--estimate", est, "--truth", truth])
        assert res.exit_code == 0
        metrics = json.loads(res.output.strip().splitlines()[-1])
        assert metrics["l1"] == pytest.approx(0.0, abs=1e-12)
        assert metrics["kl"] == pytest.approx(0.0, abs=1e-9)

    def test_small_shift_l1(self, runner, tmp_path):
        est, truth = self.make_pair(tmp_path, 0.1)
        res = invoke(runner, ["evaluate", "--estimate", est, "--truth", truth])
        metrics = json.loads(res.output.strip().splitlines()[-1])
        assert metrics["l1"] == pytest.approx(0.0797552, abs=0.002)

    def test_mismatched_grids(self, runner, tmp_path):
        est, truth = self.make_pair(tmp_path)
        short = tmp_path / "short.csv"
        rows = read_rows(truth)[:100]
        with open(short, "w") as f:
            f.write("x,pdf\n")
            for r in rows:
                f.write(f"{r['x']},{r['pdf']}\n")
        res = invoke(runner, ["evaluate", "--estimate", est, "--truth", short])
        assert res.exit_code == 2


class TestPriorCurve:
    def test_writes_expected_rows(self, runner, tmp_path):
        out = tmp_path / "weights_curve.csv"
        res = invoke(runner, ["prior-curve", "--alpha", "1", "--deltas",
                              "0,0.5,0.9", "--max-scale", 12, "--out", out])
        assert res.exit_code == 0
        rows = read_rows(out)
        assert len(rows) == 3 * 13
        assert set(rows[0]) == {"delta", "s", "expected_total_weight"}
        per_delta = {}
        for r in rows:
            per_delta.setdefault(r["delta"], 0.0)
            per_delta[r["delta"]] += float(r["expected_total_weight"])
        for total in per_delta.values():
            assert 0 < total <= 1.0 + 1e-9

    def test_invalid_delta(self, runner, tmp_path):
        res = invoke(runner, ["prior-curve", "--deltas", "1.5",
                              "--out", tmp_path / "w.csv"])
        assert res.exit_code == 2


class TestExperiment:
    def test_delta_robustness_row_count(self, runner, tmp_path):
        out = tmp_path / "out"
        res = invoke(runner, [
            "experiment", "--recipe", "delta_robustness", "--replicates", 2,
            "--seed", 1, "--n", 25, "--iterations", 25, "--burn-in", 5,
            "--deltas", "0.5", "--expected-scales", "1,3",
            "--densities", "delta_study_1", "--out", out,
        ])
        assert res.exit_code == 0
        rows = read_rows(out / "experiment_rows.csv")
        # densities x deltas x scales x replicates
        assert len(rows) == 1 * 1 * 2 * 2
        assert {"density", "delta", "expected_scale_target", "replicate",
                "mean_scale_weights", "l1", "kl"} <= set(rows[0])
        agg = read_rows(out / "experiment_summary.csv")
        assert len(agg) == 2
        assert "mean_scale_weights_mean" in agg[0]

    def test_scenario_table_smoke(self, runner, tmp_path):
        out = tmp_path / "out"
        res = invoke(runner, [
            "experiment", "--recipe", "scenario_table", "--replicates", 1,
            "--seed", 2, "--n", 30, "--iterations", 25, "--burn-in", 5,
            "--out", out,
        ])
        assert res.exit_code == 0
        rows = read_rows(out / "experiment_rows.csv")
        assert len(rows) == 4
        assert {r["scenario"] for r in rows} == {"S1", "S2", "S3", "S4"}
        for r in rows:
            assert np.isfinite(float(r["l1"])) and np.isfinite(float(r["kl"]))

    def test_custom_scenario_mapping(self, runner, tmp_path):
        out = tmp_path / "out"
        res = invoke(runner, [
            "experiment", "--recipe", "scenario_table", "--replicates", 1,
            "--n", 20, "--iterations", 20, "--burn-in", 5,
            "--scenarios", "S1=mw_01,S2=mw_06,S3=mw_10,S4=mw_15", "--out", out,
        ])
        assert res.exit_code == 0
        rows = read_rows(out / "experiment_rows.csv")
        assert {r["density"] for r in rows} == {"mw_01", "mw_06", "mw_10", "mw_15"}

    def test_zero_replicates(self, runner, tmp_path):
        res = invoke(runner, ["experiment", "--recipe", "scenario_table",
                              "--replicates", 0])
        assert res.exit_code == 2

    def test_experiment_deterministic(self, runner, tmp_path):
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            res = invoke(runner, [
                "experiment", "--recipe", "delta_robustness", "--replicates", 1,
                "--seed", 5, "--n", 20, "--iterations", 20, "--burn-in", 5,
                "--deltas", "0", "--expected-scales", "1",
                "--densities", "delta_study_1", "--out", out,
            ])
            assert res.exit_code == 0
        assert (outs[0] / "experiment_rows.csv").read_bytes() == \
            (outs[1] / "experiment_rows.csv").read_bytes()


class TestGalaxyData:
    def test_bundled_dataset(self):
        y = read_data_csv(galaxy_data_path())
        assert y.shape == (82,)
        assert y.min() > 9.0 and y.max() < 35.0  # units of 1000 km/s

    def test_fit_runs_at_depth_eight(self, runner, tmp_path):
        # short chain; the full-length depth-8 fit lives in the acceptance suite
        out = tmp_path / "out"
        res = invoke(runner, ["fit", str(galaxy_data_path()), "--out", out,
                              "--max-depth", 8, "--iterations", 150,
                              "--burn-in", 50, "--seed", 1])
        assert res.exit_code == 0
        diag = json.loads((out / "diagnostics.json").read_text())
        assert np.isfinite(diag["lpml_std"]) and np.isfinite(diag["lpml_orig"])


class TestEntryPoint:
    def test_installed_script_error_json(self, tmp_path):
        data = tmp_path / "empty.csv"
        data.write_text("y\n")
        proc = subprocess.run(
            ["msm", "fit", str(data)], capture_output=True, text=True)
        assert proc.returncode == 2
        err = json.loads(proc.stderr.strip().splitlines()[-1])
        assert err["error"] == "no observations"

    def test_installed_script_runs(self):
        proc = subprocess.run(["msm", "--version"], capture_output=True, text=True)
        assert proc.returncode == 0
