import json
import subprocess
import sys

import numpy as np
import pytest

from klcetest import AuditDataset, KernelSpec, lcb_profile, write_dataset
from klcetest.cli import main
from klcetest.simulation import SimConfig, gen_synthetic


def save(path, d):
    with open(path, "w", newline="") as fh:
        write_dataset(d, fh)
    return str(path)


@pytest.fixture
def droplast_csv(tmp_path):
    return save(tmp_path / "drop.csv", gen_synthetic(SimConfig(d=2, N=1000, seed=7,
                                                               model="droplast"), 0))


@pytest.fixture
def bayes_csv(tmp_path):
    return save(tmp_path / "bayes.csv", gen_synthetic(SimConfig(d=2, N=300, seed=3), 0))


def run(*argv):
    return main([str(a) for a in argv])


class TestAudit:
    def test_miscalibrated_rejects(self, droplast_csv, tmp_path):
        out = tmp_path / "r.json"
        assert run("audit", droplast_csv, "--bootstrap", 200, "-o", out) == 2
        rep = json.loads(out.read_text())
        assert rep["reject"] is True and rep["p_value"] < 0.05
        assert {"klce2", "kce2", "p_value", "threshold_corollary2", "metrics", "config",
                "null_quantiles", "warnings"} <= set(rep)

    def test_zero_residuals_retained(self, tmp_path):
        d = AuditDataset(np.arange(10.0)[:, None], [0, 1] * 5, [0, 1] * 5)
        out = tmp_path / "r.json"
        assert run("audit", save(tmp_path / "z.csv", d), "--bootstrap", 50, "-o", out) == 0
        rep = json.loads(out.read_text())
        assert rep["klce2"] == 0 and rep["reject"] is False and rep["warnings"]

    def test_missing_column(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("y,score,x\n1,0.5,0\n0,0.5,1\n")
        assert run("audit", path) == 1
        assert "missing column 'p'" in capsys.readouterr().err

    def test_score_out_of_range_names_row(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("y,p,x\n1,0.5,0\n0,1.5,1\n")
        assert run("metrics", path) == 1
        assert "row 2" in capsys.readouterr().err

    def test_unknown_flag_is_error(self, bayes_csv):
        with pytest.raises(SystemExit) as exc:
            run("audit", bayes_csv, "--no-such-flag")
        assert exc.value.code == 1

    def test_config_file_sets_kernels(self, bayes_csv, tmp_path):
        cfg = tmp_path / "k.json"
        cfg.write_text(json.dumps({"kernel": {"k": {"family": "rbf", "bandwidth": 0.3},
                                              "l": {"family": "constant"}}}))
        out = tmp_path / "r.json"
        run("audit", bayes_csv, "--config", cfg, "--bootstrap", 20, "-o", out)
        rep = json.loads(out.read_text())
        assert rep["klce2"] == pytest.approx(rep["kce2"], abs=1e-15)
        assert "0.3" in json.dumps(rep["kernels"])


def test_metrics_keys(bayes_csv, tmp_path):
    out, rel = tmp_path / "m.json", tmp_path / "rel.csv"
    assert run("metrics", bayes_csv, "-o", out, "--reliability-csv", rel, "--n-bins", 5) == 0
    assert set(json.loads(out.read_text())) == {"brier", "ece", "mce", "accuracy", "n_bins"}
    assert len(rel.read_text().splitlines()) == 6


class TestDiagnose:
    def read(self, path):
        lines = path.read_text().splitlines()
        return lines[0].split(","), np.array([[float(v) for v in r.split(",")]
                                              for r in lines[1:]])

    def test_matches_api(self, bayes_csv, tmp_path):
        out = tmp_path / "b.csv"
        assert run("diagnose", bayes_csv, "-o", out) == 0
        header, rows = self.read(out)
        assert header == ["x1", "x2", "fhat", "bias", "debiased_fhat", "effective_weight"]
        from klcetest import load_dataset
        d = load_dataset(bayes_csv)
        prof = lcb_profile(d, (KernelSpec.median(), KernelSpec.median()))
        np.testing.assert_array_equal(rows[:, 3], [e.bias for e in prof.ok])

    def test_zero_residuals_zero_bias(self, tmp_path):
        d = AuditDataset(np.arange(8.0)[:, None], [0, 1] * 4, [0, 1] * 4)
        out = tmp_path / "b.csv"
        run("diagnose", save(tmp_path / "z.csv", d), "-o", out)
        header, rows = self.read(out)
        assert np.all(rows[:, header.index("bias")] == 0)

    def test_constant_kernels_give_mean_residual(self, bayes_csv, tmp_path):
        out = tmp_path / "b.csv"
        run("diagnose", bayes_csv, "--k-family", "constant", "--l-family", "constant", "-o", out)
        _, rows = self.read(out)
        from klcetest import load_dataset
        e = load_dataset(bayes_csv).residuals
        np.testing.assert_allclose(rows[:, 3], e.mean(), atol=1e-13)

    def test_trend_json(self, tmp_path):
        rng = np.random.default_rng(0)
        x = np.column_stack([rng.integers(0, 2, 200), rng.uniform(-2, 2, 200)])
        d = AuditDataset(x, rng.integers(0, 2, 200), rng.uniform(0.2, 0.8, 200), ["g", "t"])
        trend = tmp_path / "t.json"
        run("diagnose", save(tmp_path / "d.csv", d), "-o", tmp_path / "b.csv",
            "--trend-json", trend, "--group-feature", "g", "--axis-feature", "t")
        groups = json.loads(trend.read_text())["groups"]
        assert [g["group"] for g in groups] == [0.0, 1.0]
        assert all(len(g["coefficients"]) == 4 for g in groups)


class TestRecalibrate:
    def test_calibrated_input_temperature_near_one(self, tmp_path):
        calib = save(tmp_path / "c.csv", gen_synthetic(SimConfig(d=2, N=4000, seed=1), 0))
        test = save(tmp_path / "t.csv", gen_synthetic(SimConfig(d=2, N=500, seed=2), 0))
        model = tmp_path / "r.json"
        assert run("recalibrate", "--calib", calib, "--test", test, "--method", "temperature",
                   "--save", model, "-o", tmp_path / "out.csv") == 0
        assert json.loads(model.read_text())["parameters"]["T"] == pytest.approx(1, abs=0.1)

    def test_then_audit(self, tmp_path):
        mk = lambda s: gen_synthetic(SimConfig(d=3, N=800, seed=s, model="droplast"), 0)
        calib, test = save(tmp_path / "c.csv", mk(1)), save(tmp_path / "t.csv", mk(2))
        rep = tmp_path / "rep.json"
        code = run("recalibrate", "--calib", calib, "--test", test, "--method", "isotonic",
                   "-o", tmp_path / "o.csv", "--then-audit", "--report", rep,
                   "--bootstrap", 100)
        r = json.loads(rep.read_text())
        assert {"pre", "post", "recalibrator", "config"} <= set(r)
        assert code == (2 if r["post"]["reject"] else 0)

    def test_load_reuses_model(self, tmp_path, bayes_csv):
        model = tmp_path / "m.json"
        model.write_text('{"kind": "temperature", "parameters": {"T": 2.0}}')
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run("recalibrate", "--load", model, "--test", bayes_csv, "-o", a)
        run("recalibrate", "--load", model, "--test", bayes_csv, "-o", b)
        assert a.read_bytes() == b.read_bytes()

    def test_needs_calib(self, bayes_csv):
        assert run("recalibrate", "--test", bayes_csv) == 1


def test_simulate_schema(tmp_path):
    out = tmp_path / "s.csv"
    assert run("simulate", "--mode", "type2", "--d-grid", "2,3", "--n-grid", "60",
               "--replicates", 3, "--bootstrap", 20, "-o", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "mode,d,N,bandwidth_scale,replicates,rejections,rejection_rate,ci_lo,ci_hi"
    assert len(lines) == 3


def test_sample_then_audit_rejects(tmp_path):
    data = tmp_path / "s.csv"
    run("simulate", "--mode", "sample", "--d-grid", 2, "--n-grid", 1000, "--seed", 7, "-o", data)
    assert run("audit", data, "--bootstrap", 200, "-o", tmp_path / "r.json") == 2


@pytest.mark.parametrize("threads", [1, 3])
def test_audit_thread_invariant(bayes_csv, tmp_path, threads):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run("audit", bayes_csv, "--bootstrap", 130, "--seed", 4, "-o", a)
    run("audit", bayes_csv, "--bootstrap", 130, "--seed", 4, "--threads", threads, "-o", b)
    assert a.read_bytes() == b.read_bytes()


def test_console_entry_point(bayes_csv):
    proc = subprocess.run([sys.executable, "-m", "klcetest", "metrics", bayes_csv],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "brier" in proc.stdout
