import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binmisclass.model import (
    DimensionError,
    ObservedDataset,
    ParameterSet,
    complete_loglik,
    compute_probability_grid,
    observed_loglik,
    observed_probability,
    observed_score,
    transpose_parameter_set,
)

from conftest import one_subject, random_dataset, random_params

LOGISTIC_1 = 0.7310585786300049  # 1 / (1 + exp(-1))

coef = st.floats(-6, 6, allow_nan=False)


@st.composite
def dataset_and_params(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    n = draw(st.integers(1, 40))
    data = random_dataset(rng, n=n)
    params = ParameterSet([draw(coef), draw(coef)], [draw(coef), draw(coef)],
                          [draw(coef), draw(coef)])
    return data, params, rng


class TestObservedDataset:
    def test_rejects_bad_outcome(self):
        with pytest.raises(ValueError, match="1 or 2"):
            ObservedDataset.from_arrays([1, 0, 2], [0.1, 0.2, 0.3])

    def test_requires_intercept_column(self):
        with pytest.raises(ValueError, match="intercept"):
            ObservedDataset(np.array([1, 2]), np.array([[1.0, 0.2], [2.0, 0.1]]),
                            np.ones((2, 1)))

    def test_row_mismatch(self):
        with pytest.raises(DimensionError):
            ObservedDataset.from_arrays([1, 2, 1], [0.1, 0.2])

    def test_arrays_are_readonly(self):
        d = ObservedDataset.from_arrays([1, 2], [0.1, 0.2], [1.0, 2.0])
        with pytest.raises(ValueError):
            d.x_matrix[0, 1] = 5.0

    def test_distinct_patterns(self):
        d = ObservedDataset.from_arrays([1, 2, 1, 2], [0, 0, 1, 1], [0, 0, 0, 2])
        assert d.distinct_covariate_patterns() == 3


class TestProbabilityGrid:
    def test_zero_beta_gives_half(self, rng):
        d = random_dataset(rng)
        g = compute_probability_grid(ParameterSet([0.0, 0.0], [0.3, 0.1], [-1, 0.2]), d)
        np.testing.assert_array_equal(g.pi[:, 0], 0.5)

    def test_beta_at_zero_covariate(self):
        d = ObservedDataset.from_arrays([1], [0.0], [0.0])
        g = compute_probability_grid(ParameterSet([1.0, -2.0], [0, 0], [0, 0]), d)
        assert g.pi[0, 0] == pytest.approx(LOGISTIC_1, abs=1e-15)

    def test_sensitivity_at_half(self):
        d = ObservedDataset.from_arrays([1], [0.0], [0.5])
        g = compute_probability_grid(ParameterSet([0, 0], [0.5, 1.0], [0, 0]), d)
        assert g.pistar_given1[0, 0] == pytest.approx(LOGISTIC_1, abs=1e-15)

    def test_dimension_error_names_block(self, rng):
        d = random_dataset(rng)
        with pytest.raises(DimensionError, match="gamma2"):
            compute_probability_grid(ParameterSet([0, 0], [0, 0], [0, 0, 0]), d)

    @settings(max_examples=60, deadline=None)
    @given(dataset_and_params())
    def test_rows_are_stochastic(self, case):
        data, params, _ = case
        g = compute_probability_grid(params, data)
        for m in (g.pi, g.pistar_given1, g.pistar_given2, observed_probability(params, data)):
            np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-12)
            assert np.all((m > 0) & (m < 1))

    def test_extreme_logits_are_clamped(self):
        d = ObservedDataset.from_arrays([1, 2], [0.0, 0.0], [0.0, 0.0])
        g = compute_probability_grid(ParameterSet([60.0, 0], [-60.0, 0], [0, 0]), d)
        assert g.pi[0, 0] == 1 - 1e-12
        assert g.pistar_given1[0, 0] == 1e-12


class TestObservedProbability:
    def test_uninformative_observation(self):
        d = ObservedDataset.from_arrays([1, 2], [0.3, -1.0], [0.2, 0.1])
        p = observed_probability(ParameterSet([0.7, 2.0], [0.0, 0.0], [0.0, 0.0]), d)
        np.testing.assert_allclose(p, 0.5, atol=1e-15)

    def test_perfect_classification(self, rng):
        d = random_dataset(rng)
        params = ParameterSet([0.4, -1.1], None, None)
        p = observed_probability(params, d)
        g = compute_probability_grid(params, d)
        np.testing.assert_array_equal(p[:, 0], g.pi[:, 0])

    def test_two_term_sum(self):
        d, params = one_subject(1, 0.7, 0.9, 0.2)
        p = observed_probability(params, d)
        assert p[0, 0] == pytest.approx(0.9 * 0.7 + 0.2 * 0.3, abs=1e-14)


class TestObservedLoglik:
    def test_single_subject(self):
        d, params = one_subject(1, 0.7, 0.9, 0.2)
        assert observed_loglik(params, d) == pytest.approx(-0.37106368139083207, abs=1e-12)

    def test_uninformative(self, rng):
        d = random_dataset(rng, n=37)
        zeros = ParameterSet([0, 0], [0, 0], [0, 0])
        assert observed_loglik(zeros, d) == pytest.approx(37 * np.log(0.5), abs=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(dataset_and_params())
    def test_mode_duality(self, case):
        data, params, _ = case
        a = observed_loglik(params, data)
        b = observed_loglik(transpose_parameter_set(params), data)
        assert abs(a - b) < 1e-9

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        data = random_dataset(rng, n=80, px=2, pz=1)
        h = 1e-5
        for _ in range(20):
            p = random_params(rng, px=2, pz=1, scale=1.5)
            theta = p.as_vector()
            fd = np.empty_like(theta)
            for a in range(theta.size):
                up, dn = theta.copy(), theta.copy()
                up[a] += h
                dn[a] -= h
                fd[a] = (observed_loglik(p.with_vector(up), data)
                         - observed_loglik(p.with_vector(dn), data)) / (2 * h)
            an = observed_score(p, data)
            rel = np.max(np.abs(an - fd)) / max(np.max(np.abs(fd)), 1e-8)
            assert rel < 1e-4

    def test_restricted_gradient(self, rng):
        data = random_dataset(rng, n=50)
        p = ParameterSet([0.3, -0.8], [1.0, 0.4], None)
        theta, h = p.as_vector(), 1e-5
        fd = [(observed_loglik(p.with_vector(theta + h * e), data)
               - observed_loglik(p.with_vector(theta - h * e), data)) / (2 * h)
              for e in np.eye(theta.size)]
        np.testing.assert_allclose(observed_score(p, data), fd, rtol=1e-5, atol=1e-7)


class TestCompleteLoglik:
    def test_two_term_hand_sum(self):
        d, params = one_subject(1, 0.7, 0.9, 0.2)
        assert complete_loglik(params, d, [1]) == pytest.approx(-0.46203545959655873, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(dataset_and_params())
    def test_relabeling_invariance(self, case):
        data, params, rng = case
        y = rng.integers(1, 3, size=data.n)
        a = complete_loglik(params, data, y)
        b = complete_loglik(transpose_parameter_set(params), data, 3 - y)
        assert abs(a - b) < 1e-9

    def test_relabeling_invariance_when_saturated(self, rng):
        data = random_dataset(rng, n=200)
        for _ in range(20):
            p = random_params(rng, scale=25)
            y = rng.integers(1, 3, size=data.n)
            a = complete_loglik(p, data, y)
            b = complete_loglik(transpose_parameter_set(p), data, 3 - y)
            assert abs(a - b) < 1e-9

    def test_perfect_classification(self, rng):
        data = random_dataset(rng)
        params = ParameterSet([0.2, 0.9], None, None)
        g = compute_probability_grid(params, data)
        expected = np.sum(np.log(g.pi[np.arange(data.n), data.ystar - 1]))
        assert complete_loglik(params, data, data.ystar) == pytest.approx(expected, abs=1e-12)

    def test_length_check(self, rng):
        data = random_dataset(rng, n=5)
        with pytest.raises(DimensionError):
            complete_loglik(random_params(rng), data, [1, 2])


class TestTranspose:
    def test_pattern(self):
        a, b, c, d, e, f = 1.1, -2.2, 3.3, 4.4, -5.5, 6.6
        t = transpose_parameter_set(ParameterSet([a, b], [c, d], [e, f]))
        np.testing.assert_array_equal(t.beta, [-a, -b])
        np.testing.assert_array_equal(t.gamma1, [e, f])
        np.testing.assert_array_equal(t.gamma2, [c, d])

    def test_zero_fixed_point(self):
        z = ParameterSet([0.0, 0.0], [0.0, 0.0], [0.0, 0.0])
        assert transpose_parameter_set(z) == z

    @given(st.lists(coef, min_size=6, max_size=6))
    def test_involution(self, v):
        p = ParameterSet(v[:2], v[2:4], v[4:])
        assert transpose_parameter_set(transpose_parameter_set(p)) == p
