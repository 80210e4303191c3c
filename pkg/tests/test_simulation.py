import numpy as np
import pytest

from binmisclass.simulation import (
    PRESETS,
    ScenarioConfig,
    aggregate,
    bias_rmse,
    generate_dataset,
    preset,
    run_replicate,
    run_study,
)


def mean_rates(scenario, reps):
    gens = [generate_dataset(scenario, i) for i in range(reps)]
    return (np.mean([g.prevalence for g in gens]), np.mean([g.sensitivity for g in gens]),
            np.mean([g.specificity for g in gens]))


class TestPresets:
    def test_values(self):
        s1, s2, s3 = (PRESETS[f"setting{k}"] for k in (1, 2, 3))
        assert (s1.n, s1.z_mean, s1.n_realizations) == (1000, 1.5, 500)
        assert (s2.n, s2.z_mean) == (10000, 2.5)
        assert (s3.n, s3.z_mean, s3.gamma2_true) == (5000, 1.5, (-5.0, -5.0))
        for s in (s1, s2, s3):
            assert s.beta_true == (1.0, -2.0) and s.gamma1_true == (0.5, 1.0)
            assert s.covariance == 0.30
        assert s1.gamma2_true == s2.gamma2_true == (-0.5, -1.0)

    def test_lookup(self):
        assert preset("2") is PRESETS["setting2"]
        with pytest.raises(KeyError):
            preset("setting9")

    @pytest.mark.parametrize("kw", [{"n": 0}, {"covariance": 1.0}, {"estimators": ("bogus",)},
                                    {"beta_true": (1.0,)}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ScenarioConfig(**kw)


class TestGenerate:
    def test_setting1_rates(self):
        p, sens, spec = mean_rates(preset("setting1"), 500)
        assert p == pytest.approx(0.647, abs=0.01)
        assert sens == pytest.approx(0.847, abs=0.01)
        assert spec == pytest.approx(0.877, abs=0.01)

    def test_setting2_rates_in_band(self):
        _, sens, spec = mean_rates(preset("setting2"), 200)
        assert 0.90 <= sens <= 0.95
        assert 0.90 <= spec <= 0.95

    def test_setting3_specificity(self):
        _, _, spec = mean_rates(preset("setting3"), 50)
        assert spec == pytest.approx(1.0, abs=0.001)

    def test_saturated_observation(self):
        sc = ScenarioConfig(n=500, gamma1_true=(50.0, 0.0), gamma2_true=(50.0, 0.0))
        gen = generate_dataset(sc, 0)
        assert np.all(gen.data.ystar == 1)

    def test_covariates(self):
        gen = generate_dataset(preset("setting2"), 3)
        x, z = gen.data.x_matrix[:, 1], gen.data.z_matrix[:, 1]
        assert np.all(z >= 0)
        assert x.mean() == pytest.approx(0.0, abs=0.05)
        assert x.std() == pytest.approx(1.0, abs=0.05)

    def test_realized_rates_match_crosstab(self):
        gen = generate_dataset(preset("setting1"), 4)
        y, ys = gen.y_true, gen.data.ystar
        assert gen.prevalence == np.mean(y == 1)
        assert gen.sensitivity == np.sum((y == 1) & (ys == 1)) / np.sum(y == 1)
        assert gen.specificity == np.sum((y == 2) & (ys == 2)) / np.sum(y == 2)

    def test_replicates_independent_of_order(self):
        sc = preset("setting1")
        late = generate_dataset(sc, 7)
        for i in range(7):
            generate_dataset(sc, i)
        again = generate_dataset(sc, 7)
        np.testing.assert_array_equal(late.data.x_matrix, again.data.x_matrix)
        np.testing.assert_array_equal(late.data.ystar, again.data.ystar)
        other = generate_dataset(sc.replace(seed=1), 7)
        assert not np.array_equal(late.data.ystar, other.data.ystar)


class TestAggregate:
    def test_two_point(self):
        assert bias_rmse([1.0, 3.0], 2.0) == (0.0, 1.0)

    def test_oracle_estimator(self):
        sc = preset("setting1").replace(n=300, n_realizations=3, estimators=("oracle",))
        rep = run_study(sc)
        for nm in rep.coefficient_names:
            assert rep.bias["oracle"][nm] == 0.0
            assert rep.rmse["oracle"][nm] == 0.0

    def test_failures_and_ambiguous_excluded(self):
        sc = preset("setting1").replace(n_realizations=3, estimators=("naive",))
        base = {"method": "naive", "data_prevalence": 0.6, "data_sens": 0.9, "data_spec": 0.9,
                "converged": True, "flipped": False, "prevalence": 0.6, "sens": 1.0, "spec": 1.0}
        ok = dict(base, replicate=0, status="ok", ambiguous=None,
                  estimates={"beta_0": 1.5, "beta_x1": -1.0}, se={})
        amb = dict(base, replicate=1, status="ok", ambiguous=True,
                   estimates={"beta_0": 99.0, "beta_x1": 99.0}, se={})
        bad = dict(base, replicate=2, status="failed: RuntimeError: boom")
        rep = aggregate(sc, [ok, amb, bad])
        assert rep.counts["naive"] == {"used": 1, "failed": 1, "nonconverged": 0,
                                       "flipped": 0, "ambiguous": 1}
        assert rep.bias["naive"]["beta_0"] == pytest.approx(0.5)
        assert "gamma_110" not in rep.bias["naive"]
        assert "failed 1" in rep.format_table()

    def test_failure_tagged_not_raised(self, monkeypatch):
        import binmisclass.simulation as sim

        def boom(*a, **k):
            raise RuntimeError("boom")

        monkeypatch.setattr(sim, "fit_naive", boom)
        rows = run_replicate(preset("setting1").replace(n=200, estimators=("naive", "oracle")), 0)
        assert rows[0]["status"] == "failed: RuntimeError: boom"
        assert rows[1]["status"] == "ok"


@pytest.fixture(scope="module")
def small():
    sc = preset("setting1").replace(n=500, n_realizations=4)
    return sc, run_study(sc)


class TestStudy:
    def test_rmse_dominates_bias(self, small):
        _, rep = small
        for m in rep.bias:
            for nm, b in rep.bias[m].items():
                assert rep.rmse[m][nm] >= abs(b)
            for v in rep.probabilities[m].values():
                assert 0.0 <= v <= 1.0

    def test_deterministic(self, small):
        sc, rep = small
        again = run_study(sc)
        assert again.to_dict() == rep.to_dict()
        assert again.rows == rep.rows

    def test_parallel_matches_serial(self, small):
        sc, rep = small
        par = run_study(sc, jobs=2)
        assert par.to_dict() == rep.to_dict()

    def test_outputs(self, small, tmp_path):
        _, rep = small
        rep.write_csv(tmp_path / "r.csv")
        rep.write_json(tmp_path / "s.json")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert len(lines) == 1 + 4 * 4
        table = rep.format_table()
        assert "beta_x1" in table and "P(Y*=1|Y=1)" in table
