import csv
import json

import jsonschema
import numpy as np
import pytest

from binmisclass.cli import main
from binmisclass.dataio import load_schema, read_dataset_csv


@pytest.fixture(scope="module")
def setting2_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "d.csv"
    assert main(["simulate", "--setting", "2", "--seed", "7", "--out", str(path)]) == 0
    return path


def fit_json(data, method, out, *extra):
    assert main(["fit", "--data", str(data), "--method", method, "--out", str(out), *extra]) == 0
    return json.loads(out.read_text())


def coef(result, name):
    return next(c for c in result["coefficients"] if c["name"] == name)


class TestSimulate:
    def test_setting2_rows(self, setting2_file):
        data, truth = read_dataset_csv(setting2_file)
        assert data.n == 10000 and truth is None
        manifest = json.loads((setting2_file.parent / "d.csv.manifest.json").read_text())
        jsonschema.validate(manifest, load_schema("manifest"))
        assert manifest["seed"] == 7

    def test_byte_identical(self, tmp_path, capsys):
        for name in ("a.csv", "b.csv"):
            assert main(["simulate", "--setting", "1", "--seed", "7",
                         "--out", str(tmp_path / name)]) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert "wrote 1000 rows" in capsys.readouterr().out

    def test_with_truth(self, tmp_path):
        out = tmp_path / "t.csv"
        main(["simulate", "--setting", "3", "--seed", "1", "--with-truth", "--out", str(out)])
        data, truth = read_dataset_csv(out)
        assert truth is not None and truth.shape == (5000,)
        # near-perfect specificity: a true class 2 is almost never recorded as 1
        spec = np.mean(data.ystar[truth == 2] == 2)
        assert spec > 0.995

    def test_bad_config_names_field(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text('base = "setting1"\nn = -5\n')
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "x.csv")]) == 2
        err = capsys.readouterr().err
        assert "'n'" in err and "line 2" in err

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "small.toml"
        cfg.write_text('base = "setting2"\nn = 250\nseed = 4\n[em]\nmax_iter = 50\n')
        out = tmp_path / "s.csv"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        assert read_dataset_csv(out)[0].n == 250

    def test_unknown_option(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text('n = 100\n[mcmc]\nchain = 3\n')
        assert main(["simulate", "--config", str(cfg)]) == 2
        assert "mcmc.chain" in capsys.readouterr().err

    def test_missing_file_is_io_error(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.toml")]) == 3


class TestFit:
    def test_em_consistent(self, setting2_file, tmp_path):
        res = fit_json(setting2_file, "em", tmp_path / "em.json")
        jsonschema.validate(res, load_schema("fit_result"))
        bx = coef(res, "beta_x1")
        assert abs(bx["estimate"] + 2.0) < 3 * bx["se"]
        assert res["rates"]["sens"] > 0.5 and res["rates"]["spec"] > 0.5
        assert res["convergence"]["converged"] is True

    def test_naive_attenuated(self, setting2_file, tmp_path):
        em = fit_json(setting2_file, "em", tmp_path / "em.json")
        naive = fit_json(setting2_file, "naive", tmp_path / "naive.json")
        jsonschema.validate(naive, load_schema("fit_result"))
        assert abs(coef(naive, "beta_x1")["estimate"]) < abs(coef(em, "beta_x1")["estimate"])
        assert naive["params"]["gamma1"] is None

    def test_default_output_path(self, tmp_path, capsys):
        data = tmp_path / "small.csv"
        main(["simulate", "--setting", "1", "--seed", "2", "--out", str(data)])
        assert main(["fit", "--data", str(data), "--method", "perfect-spec"]) == 0
        res = json.loads((tmp_path / "small.perfect-spec.json").read_text())
        jsonschema.validate(res, load_schema("fit_result"))
        assert "beta_x1" in capsys.readouterr().out

    def test_mcmc_deterministic(self, tmp_path):
        data = tmp_path / "m.csv"
        main(["simulate", "--setting", "1", "--seed", "5", "--out", str(data)])
        args = ["--chains", "2", "--seed", "3", "--iterations", "400", "--burn-in", "200",
                "--dump-draws", str(tmp_path / "draws")]
        a = fit_json(data, "mcmc", tmp_path / "a.json", *args)
        b = fit_json(data, "mcmc", tmp_path / "b.json", *args)
        assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()
        jsonschema.validate(a, load_schema("fit_result"))
        assert len(a["diagnostics"]["chain_corrections"]) == 2
        assert (tmp_path / "draws" / "chain_2.csv").exists()

    def test_nonconvergence_exit_zero(self, setting2_file, tmp_path, capsys):
        res = fit_json(setting2_file, "em", tmp_path / "nc.json", "--max-iter", "2")
        assert res["convergence"]["converged"] is False
        assert "did not converge" in capsys.readouterr().err

    def test_malformed_csv(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("ystar,x1,z1\n1,0.5,abc\n")
        assert main(["fit", "--data", str(bad), "--method", "naive"]) == 2
        assert "line 2" in capsys.readouterr().err
        bad.write_text("ystar,x1\n3,0.5\n1,0.2\n")
        assert main(["fit", "--data", str(bad), "--method", "naive"]) == 2

    def test_missing_rows_dropped_with_warning(self, tmp_path, capsys):
        f = tmp_path / "gaps.csv"
        rng = np.random.default_rng(0)
        rows = [f"{rng.integers(1, 3)},{rng.normal():.6f}" for _ in range(60)] + ["1,"]
        f.write_text("ystar,x1\n" + "\n".join(rows) + "\n")
        assert main(["fit", "--data", str(f), "--method", "naive"]) == 0
        assert "dropped 1 rows" in capsys.readouterr().err


class TestStudy:
    def test_naive_setting1(self, tmp_path):
        out = tmp_path / "naive"
        assert main(["study", "--setting", "1", "--replicates", "100", "--methods", "naive",
                     "--out-dir", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        jsonschema.validate(summary, load_schema("study_report"))
        jsonschema.validate(json.loads((out / "manifest.json").read_text()),
                            load_schema("manifest"))
        assert summary["bias"]["naive"]["beta_x1"] == pytest.approx(1.019, abs=0.1)
        assert summary["counts"]["naive"]["used"] == 100

    def test_single_replicate_equals_fit(self, tmp_path):
        data = tmp_path / "one.csv"
        main(["simulate", "--setting", "1", "--seed", "7", "--out", str(data)])
        fit = fit_json(data, "em", tmp_path / "one.json")
        out = tmp_path / "one_study"
        assert main(["study", "--setting", "1", "--seed", "7", "--replicates", "1",
                     "--methods", "em", "--out-dir", str(out)]) == 0
        with open(out / "replicates.csv") as fh:
            (row,) = list(csv.DictReader(fh))
        for c in fit["coefficients"]:
            assert float(row[c["name"]]) == c["estimate"]
            assert float(row["se_" + c["name"]]) == pytest.approx(c["se"], rel=1e-12)
        assert (out / "table.txt").read_text().startswith("scenario setting1")

    def test_unknown_method(self, capsys):
        assert main(["study", "--setting", "1", "--methods", "em,magic"]) == 2
        assert "magic" in capsys.readouterr().err

    def test_setting_and_config_exclusive(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text("n = 100\n")
        assert main(["study", "--setting", "1", "--config", str(cfg)]) == 2
