"""Tests for the logistic model primitives and the Newton solver."""

import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from osmac.datamodel import Dataset, Subsample
from osmac.errors import DataError, SeparationError, SingularHessianError
from osmac.glm import (
    SolverConfig,
    WeightedSample,
    check_separation,
    factorize_spd,
    fit_full,
    loglik,
    newton_mle,
    score_and_hessian,
    sigmoid,
)
from tests.conftest import random_instance


class TestSigmoid:
    def test_values(self):
        assert sigmoid(0.0) == 0.5
        assert sigmoid(800.0) == 1.0
        assert sigmoid(-800.0) == 0.0

    def test_vectorized(self):
        assert_allclose(sigmoid(np.array([-1.0, 1.0])), [1 / (1 + np.e), np.e / (1 + np.e)])


class TestLoglik:
    def test_matches_direct_formula(self, instance):
        data, beta = instance(1)
        sample = WeightedSample.from_dataset(data)
        p = 1.0 / (1.0 + np.exp(-(data.x @ beta)))
        expected = np.sum(data.y * np.log(p) + (1 - data.y) * np.log(1 - p))
        assert loglik(sample, beta) == pytest.approx(expected, rel=1e-12)

    def test_large_eta_stays_finite(self):
        sample = WeightedSample(np.array([[1.0], [1.0]]), np.array([1.0, 0.0]), np.ones(2))
        assert np.isfinite(loglik(sample, np.array([1000.0])))


class TestScoreAndHessian:
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_finite_differences(self, seed):
        data, beta = random_instance(seed, n=60, d=4)
        weights = np.random.default_rng(seed + 100).uniform(0.5, 2.0, data.n)
        sample = WeightedSample.from_dataset(data, weights)
        gradient, neg_hessian = score_and_hessian(sample, beta)

        h = 1e-5
        numeric_gradient = np.empty(data.d)
        numeric_hessian = np.empty((data.d, data.d))
        for j in range(data.d):
            step = np.zeros(data.d)
            step[j] = h
            numeric_gradient[j] = (loglik(sample, beta + step) - loglik(sample, beta - step)) / (2 * h)
            g_plus, _ = score_and_hessian(sample, beta + step)
            g_minus, _ = score_and_hessian(sample, beta - step)
            numeric_hessian[:, j] = -(g_plus - g_minus) / (2 * h)

        assert_allclose(gradient, numeric_gradient, rtol=1e-5, atol=1e-5)
        assert_allclose(neg_hessian, numeric_hessian, rtol=1e-4, atol=1e-4)

    def test_hessian_is_symmetric(self, instance):
        data, beta = instance(4)
        _, neg_hessian = score_and_hessian(WeightedSample.from_dataset(data), beta)
        assert_allclose(neg_hessian, neg_hessian.T, atol=0)

    @pytest.mark.parametrize("scale", [0.1, 1.0, 10.0])
    def test_hessian_is_psd(self, scale):
        data, _ = random_instance(9, n=80, d=4)
        sample = WeightedSample.from_dataset(data)
        gen = np.random.default_rng(9)
        for _ in range(20):
            _, neg_hessian = score_and_hessian(sample, scale * gen.standard_normal(4))
            assert np.linalg.eigvalsh(neg_hessian).min() >= -1e-10 * np.trace(neg_hessian)


class TestWeightedSample:
    def test_from_subsample_uses_inverse_probabilities(self, instance):
        data, _ = instance(2)
        sub = Subsample([0, 3, 3], [0.5, 0.25, 0.25], [1, 1, 1])
        sample = WeightedSample.from_subsample(data, sub)
        assert_allclose(sample.weights, [2.0, 4.0, 4.0])
        assert sample.m == 3
        unweighted = WeightedSample.from_subsample(data, sub, weighted=False)
        assert_allclose(unweighted.weights, np.ones(3))

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(DataError):
            WeightedSample(np.ones((2, 1)), np.array([0.0, 1.0]), np.array([1.0, 0.0]))


class TestSolverConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        assert (cfg.tol, cfg.max_iter, cfg.divergence_norm) == (1e-8, 100, 1e8)

    @pytest.mark.parametrize("kwargs", [{"tol": 0.0}, {"max_iter": 0}, {"divergence_norm": -1.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)


class TestNewton:
    def test_converges_with_zero_gradient(self, mz_small):
        fit = newton_mle(WeightedSample.from_dataset(mz_small))
        assert fit.converged
        assert not fit.separation_detected
        assert fit.iterations < 15
        assert fit.gradient_norm < 1e-6
        assert np.isfinite(fit.loglik)

    def test_recovers_true_coefficients_roughly(self, mz_medium):
        fit = newton_mle(WeightedSample.from_dataset(mz_medium))
        assert_allclose(fit.beta, np.full(7, 0.5), atol=0.15)

    def test_weight_scaling_does_not_change_argmax(self, instance):
        data, _ = instance(7, n=200, d=3)
        base = newton_mle(WeightedSample.from_dataset(data))
        scaled = newton_mle(WeightedSample.from_dataset(data, np.full(data.n, 37.0)))
        assert_allclose(scaled.beta, base.beta, rtol=1e-7, atol=1e-9)

    def test_start_at_optimum_stops_immediately(self, mz_small):
        sample = WeightedSample.from_dataset(mz_small)
        fit = newton_mle(sample)
        again = newton_mle(sample, init=fit.beta)
        assert again.iterations == 1
        assert_allclose(again.beta, fit.beta, rtol=1e-10)

    def test_separated_data_raises(self, separable):
        with pytest.raises(SeparationError):
            newton_mle(WeightedSample.from_dataset(separable))

    def test_separated_data_flagged_without_raising(self, separable):
        fit = newton_mle(WeightedSample.from_dataset(separable), raise_on_separation=False)
        assert fit.separation_detected
        assert not fit.converged

    def test_single_distinct_row_is_singular(self):
        x = np.tile([[1.0, 0.3, -0.2]], (10, 1))
        y = np.array([0, 1] * 5)
        with pytest.raises(SingularHessianError):
            newton_mle(WeightedSample.from_dataset(Dataset(x, y)))

    def test_collinear_columns_are_singular(self, instance):
        data, _ = instance(8, n=100, d=2)
        x = np.column_stack([data.x, 2.0 * data.x[:, 0]])
        with pytest.raises(SingularHessianError):
            newton_mle(WeightedSample.from_dataset(Dataset(x, data.y)))

    def test_iteration_cap_warns(self, mz_small):
        with pytest.warns(RuntimeWarning):
            fit = newton_mle(WeightedSample.from_dataset(mz_small), cfg=SolverConfig(tol=1e-300, max_iter=2))
        assert not fit.converged
        assert fit.iterations == 2

    def test_init_length_checked(self, mz_small):
        with pytest.raises(DataError):
            newton_mle(WeightedSample.from_dataset(mz_small), init=np.zeros(3))

    def test_balanced_intercept_only(self):
        fit = newton_mle(WeightedSample.from_dataset(Dataset(np.ones((2, 1)), [0, 1])))
        assert_allclose(fit.beta, [0.0], atol=1e-12)

    def test_intercept_only_is_logit_of_mean(self):
        fit = newton_mle(WeightedSample.from_dataset(Dataset(np.ones((4, 1)), [0, 0, 0, 1])))
        assert fit.converged
        assert_allclose(fit.beta, [np.log(1.0 / 3.0)], atol=1e-8)

    def test_two_point_separation_without_intercept(self):
        with pytest.raises(SeparationError):
            newton_mle(WeightedSample.from_dataset(Dataset([[-1.0], [1.0]], [0, 1])))

    def test_identical_responses_have_no_mle(self):
        z = np.linspace(-1.0, 1.0, 30)
        data = Dataset(np.column_stack([np.ones_like(z), z]), np.zeros(30))
        with pytest.raises(SeparationError):
            newton_mle(WeightedSample.from_dataset(data))

    @pytest.mark.parametrize("seed", range(3))
    def test_solution_maximizes_loglik(self, seed):
        data, _ = random_instance(seed, n=200, d=4)
        sample = WeightedSample.from_dataset(data)
        fit = newton_mle(sample)
        best = loglik(sample, fit.beta)
        gen = np.random.default_rng(seed)
        for _ in range(100):
            eps = gen.standard_normal(4)
            eps *= 1e-3 / np.linalg.norm(eps)
            assert loglik(sample, fit.beta + eps) <= best + 1e-12

    def test_saturated_start_is_singular(self, mz_small):
        # every fitted probability rounds to one at this start
        x = np.column_stack([np.ones(mz_small.n), mz_small.x])
        sample = WeightedSample.from_dataset(Dataset(x, mz_small.y))
        init = np.zeros(8)
        init[0] = 100.0
        with pytest.raises(SingularHessianError):
            newton_mle(sample, init=init)
        assert newton_mle(sample).converged


class TestSeparationCheck:
    def test_identical_responses(self):
        data = Dataset(np.ones((4, 1)), [1, 1, 1, 1])
        assert check_separation(data, [])

    def test_diverging_path(self, separable):
        path = [np.zeros(2), np.array([0.0, 1e9])]
        assert check_separation(separable, path)

    def test_regular_path(self, mz_small):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            fit = newton_mle(WeightedSample.from_dataset(mz_small))
        assert not check_separation(mz_small, [np.zeros(7), fit.beta])


class TestFactorize:
    def test_singular_returns_none(self):
        assert factorize_spd(np.array([[1.0, 1.0], [1.0, 1.0]])) is None

    def test_spd_factorizes(self):
        assert factorize_spd(np.array([[2.0, 0.5], [0.5, 1.0]])) is not None


class TestFitFull:
    def test_attaches_standard_errors(self, mz_small):
        fit = fit_full(mz_small)
        assert fit.vcov.shape == (7, 7)
        assert np.all(fit.se > 0)
        assert_allclose(fit.se, np.sqrt(np.diag(fit.vcov)))
