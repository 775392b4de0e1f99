import json
import os

import numpy as np
import pytest

from ldsid.cli import main
from ldsid import lds
from ldsid.risk import population_risk_closed


def write_config(path, data):
    path.write_text(json.dumps(data))
    return str(path)


GEN = {"n": 2, "alpha": 0.9, "strategy": "gaussian_coeff", "sigma": 0.1, "T": 64, "N": 60, "seed": 7}


@pytest.fixture()
def dataset(tmp_path):
    cfg = write_config(tmp_path / "gen.json", GEN)
    out = tmp_path / "data"
    assert main(["gen", "--config", cfg, "--out", str(out)]) == 0
    return tmp_path, out


class TestGen:
    def test_file_count_and_manifest(self, dataset):
        tmp, out = dataset
        files = sorted(os.listdir(out))
        csvs = [f for f in files if f.startswith("traj_")]
        assert len(csvs) == 60
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["trajectories"] == csvs
        assert manifest["teacher_membership"]["ok"] is True
        assert "slope_margin" in manifest["teacher_membership"]
        assert (out / "effective_config.json").exists()

    def test_rerun_byte_identical(self, dataset, tmp_path):
        tmp, out = dataset
        cfg = write_config(tmp_path / "gen2.json", GEN)
        out2 = tmp_path / "data2"
        assert main(["gen", "--config", cfg, "--out", str(out2)]) == 0
        for name in sorted(os.listdir(out)):
            if name == "run.log":
                continue
            assert (out / name).read_bytes() == (out2 / name).read_bytes(), name


class TestTrain:
    def test_proper_mode_converges(self, dataset, tmp_path):
        tmp, data = dataset
        cfg = write_config(tmp_path / "train.json", {"eta": 0.02, "passes": 4, "seed": 0})
        run = tmp_path / "run"
        assert main(["train", "--config", cfg, "--data", str(data), "--out", str(run), "--mode", "proper"]) == 0
        model = lds.load_system(run / "model.json")
        teacher = lds.load_system(data / "teacher.json")
        excess = population_risk_closed(model, teacher, 64, 0.1) - 0.01
        init_excess = population_risk_closed(
            lds.SystemParams(np.zeros(2), np.zeros((1, 2)), np.zeros((1, 1))), teacher, 64, 0.1
        ) - 0.01
        assert excess <= 0.1 * init_excess
        history = (run / "history.csv").read_text().splitlines()
        assert history[0].split(",")[0] == "iter"
        assert len(history) == 1 + 4 * 60
        summary = json.loads((run / "summary.json").read_text())
        assert summary["excess_risk"] == pytest.approx(excess)

    def test_split_mode_chunk_count(self, dataset, tmp_path):
        tmp, data = dataset
        cfg = write_config(tmp_path / "train.json", {"eta": 0.02, "beta": 10, "seed": 0})
        run = tmp_path / "run_split"
        assert main(["train", "--config", cfg, "--data", str(data), "--out", str(run), "--mode", "split"]) == 0
        history = (run / "history.csv").read_text().splitlines()
        # 64 // (beta * n) = 3 chunks per sequence
        assert len(history) == 1 + 60 * 3

    def test_linreg_mode_bias_report(self, dataset, tmp_path):
        tmp, data = dataset
        cfg = write_config(tmp_path / "train.json", {"window": 6})
        run = tmp_path / "run_lin"
        assert main(["train", "--config", cfg, "--data", str(data), "--out", str(run), "--mode", "linreg"]) == 0
        report = json.loads((run / "linreg.json").read_text())
        assert report["rows"] == 60 * (64 - 6)
        assert report["bias_floor"] > 0

    def test_rerun_byte_identical(self, dataset, tmp_path):
        tmp, data = dataset
        cfg = write_config(tmp_path / "train.json", {"eta": 0.02, "seed": 0})
        r1, r2 = tmp_path / "r1", tmp_path / "r2"
        for run in (r1, r2):
            assert main(["train", "--config", cfg, "--data", str(data), "--out", str(run)]) == 0
        for name in ("model.json", "history.csv", "summary.json"):
            assert (r1 / name).read_bytes() == (r2 / name).read_bytes(), name

    def test_checkpoints_written(self, dataset, tmp_path):
        tmp, data = dataset
        cfg = write_config(tmp_path / "train.json", {"eta": 0.02, "checkpoint_every": 25})
        run = tmp_path / "ckpt"
        assert main(["train", "--config", cfg, "--data", str(data), "--out", str(run)]) == 0
        import glob

        checkpoints = sorted(glob.glob(str(run / "model_*.json")))
        assert len(checkpoints) == 60 // 25
        assert lds.load_system(checkpoints[0]).n == 2

    def test_improper_mode(self, dataset, tmp_path):
        tmp, data = dataset
        cfg = write_config(
            tmp_path / "train.json", {"eta": 0.02, "n_states": 4, "alpha": 0.95, "seed": 0}
        )
        run = tmp_path / "run_imp"
        assert main(["train", "--config", cfg, "--data", str(data), "--out", str(run), "--mode", "improper"]) == 0
        model = lds.load_system(run / "model.json")
        assert model.n == 4
        summary = json.loads((run / "summary.json").read_text())
        assert summary["transfer_grid_error"] < 0.5


class TestEval:
    def test_report_fields_agree(self, dataset, tmp_path):
        tmp, data = dataset
        cfg = write_config(tmp_path / "train.json", {"eta": 0.02, "passes": 3, "seed": 0})
        run = tmp_path / "run"
        main(["train", "--config", cfg, "--data", str(data), "--out", str(run)])
        eval_cfg = write_config(
            tmp_path / "eval.json",
            {"T": 64, "sigma": 0.1, "T_prime": [128, 256], "mc_trials": 2000},
        )
        out = tmp_path / "eval"
        assert main([
            "eval", "--config", eval_cfg, "--model", str(run / "model.json"),
            "--teacher", str(data / "teacher.json"), "--out", str(out), "--jobs", "2",
        ]) == 0
        report = json.loads((out / "report.json").read_text())
        assert abs(report["population_mc"] - report["population"]) <= 5 * report["population_mc_se"]
        assert abs(report["idealized"] - report["idealized_freq"]) <= 1e-4 * max(
            report["idealized"], 1e-12
        )
        f_t = report["population"]
        for tp, value in report["population_sweep"].items():
            assert value <= 1.1 * f_t + 1e-6
        curve = (out / "transfer_error_curve.csv").read_text().splitlines()
        assert curve[0] == "theta,error"
        assert len(curve) == 1 + 512

    def test_csv_format(self, dataset, tmp_path):
        tmp, data = dataset
        run = tmp_path / "runc"
        main(["train", "--data", str(data), "--out", str(run)])
        out = tmp_path / "evalc"
        assert main([
            "eval", "--model", str(run / "model.json"),
            "--teacher", str(data / "teacher.json"), "--out", str(out), "--format", "csv",
        ]) == 0
        assert (out / "report.csv").read_text().startswith("key,value")


class TestCheck:
    def test_zero_vector_all_margins_positive(self, tmp_path, capsys):
        coeffs = tmp_path / "a.json"
        coeffs.write_text("[0.0, 0.0]")
        assert main(["check", "--coeffs", str(coeffs)]) == 0
        out = capsys.readouterr().out
        assert "member: True" in out

    def test_colliding_roots_rejected_with_angle(self, tmp_path, capsys):
        from ldsid.poly import Polynomial, coeffs_to_a

        a = coeffs_to_a(Polynomial.from_roots([0.99] * 8))
        coeffs = tmp_path / "a.json"
        coeffs.write_text(json.dumps({"a": list(a)}))
        assert main(["check", "--coeffs", str(coeffs)]) == 0
        out = capsys.readouterr().out
        assert "member: False" in out
        assert "worst_angle" in out

    def test_artificial_pair(self, tmp_path, capsys):
        from ldsid.gen import artificial_construction
        from ldsid.poly import coeffs_to_a

        p, u = artificial_construction(12, 0.5)
        f1 = tmp_path / "p.json"
        f1.write_text(json.dumps(list(coeffs_to_a(p))))
        assert main(["check", "--coeffs", str(f1)]) == 0
        assert "member: False" in capsys.readouterr().out
        f2 = tmp_path / "pu.json"
        f2.write_text(json.dumps(list(coeffs_to_a(p * u))))
        cfg = write_config(tmp_path / "c.json", {"alpha": 0.75})
        assert main(["check", "--coeffs", str(f2), "--config", cfg]) == 0
        assert "member: True" in capsys.readouterr().out


class TestExitCodes:
    def test_usage_error(self):
        assert main(["gen"]) == 1

    def test_missing_data_io(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 3

    def test_malformed_model(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("[1, 2, 3]")
        assert main(["eval", "--model", str(bad), "--teacher", str(bad)]) == 1

    def test_numerical_failure_on_divergent_training(self, dataset, tmp_path):
        tmp, data = dataset
        cfg = write_config(tmp_path / "hot.json", {"eta": 1e9, "alpha": 1.0})
        rc = main(["train", "--config", cfg, "--data", str(data), "--out", str(tmp_path / "hot")])
        assert rc == 2

    def test_numerical_failure_unstable_eval(self, tmp_path):
        unstable = lds.SystemParams.siso([-1.2], [1.0])
        stable = lds.SystemParams.siso([-0.5], [1.0])
        pm = tmp_path / "m.json"
        pt = tmp_path / "t.json"
        lds.save_system(unstable, pm)
        lds.save_system(stable, pt)
        out = tmp_path / "e"
        rc = main(["eval", "--model", str(pm), "--teacher", str(pt), "--out", str(out)])
        assert rc == 0  # partial report with error fields, not a crash
        report = json.loads((out / "report.json").read_text())
        assert "error" in report
