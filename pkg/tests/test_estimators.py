"""Tests for the subsample estimators and the subsample-only variance."""

import dataclasses

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

import osmac.estimators
from osmac.datamodel import Dataset, SamplingPlan, Scheme, Subsample
from osmac.errors import (
    DataError,
    DegenerateClassesError,
    EmptyAcceptanceError,
    PilotSeparationError,
    SingularHessianError,
    SingularMxHatError,
    WrongSchemeError,
)
from osmac.estimators import (
    MxSource,
    TwoStepConfig,
    algorithm1_estimate,
    estimate_variance,
    fit_pilot,
    lcc_estimate,
    scale_acceptance,
    two_step_estimate,
)
from osmac.glm import SolverConfig
from osmac.metrics import squared_error
from osmac.sampler import Rng
from osmac.ssp import compute_mx, ssp_uniform


def _refuse(*args, **kwargs):
    raise AssertionError("M_X must not be computed on this path")


class TestTwoStepConfig:
    def test_defaults(self):
        cfg = TwoStepConfig(r0=100, r=400)
        assert cfg.pilot_scheme is Scheme.CASE_CONTROL
        assert cfg.criterion is Scheme.MVC
        assert cfg.mx_source is MxSource.FULL_DATA

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"r0": 0, "r": 10},
            {"r0": 10, "r": 0},
            {"r0": 10, "r": 10, "pilot_scheme": Scheme.MVC},
            {"r0": 10, "r": 10, "criterion": Scheme.UNIFORM},
            {"r0": 10, "r": 10, "max_pilot_attempts": 0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TwoStepConfig(**kwargs)


class TestSingleStepEstimate:
    def test_uniform_fit(self, mz_small):
        fit, sub = algorithm1_estimate(mz_small, ssp_uniform(mz_small.n), 500, Rng(1))
        assert fit.converged
        assert len(sub) == 500
        assert "solve" in fit.timings
        assert np.all(sub.step_tag == 1)

    def test_reproducible(self, mz_small):
        plan = ssp_uniform(mz_small.n)
        first, _ = algorithm1_estimate(mz_small, plan, 300, Rng(2, 5))
        second, _ = algorithm1_estimate(mz_small, plan, 300, Rng(2, 5))
        assert_array_equal(first.beta, second.beta)

    def test_acceptance_plan_rejected(self, mz_small):
        plan = SamplingPlan(np.full(mz_small.n, 0.1), Scheme.LCC_ACCEPTANCE)
        with pytest.raises(WrongSchemeError):
            algorithm1_estimate(mz_small, plan, 10, Rng(0))


class TestPilot:
    def test_separated_data_exhausts_attempts(self, separable):
        with pytest.raises(PilotSeparationError) as excinfo:
            fit_pilot(separable, Scheme.CASE_CONTROL, 20, Rng(0), SolverConfig(), max_attempts=3)
        assert excinfo.value.attempts == 3

    def test_two_step_surfaces_pilot_failure(self, separable):
        with pytest.raises(PilotSeparationError):
            two_step_estimate(separable, TwoStepConfig(r0=20, r=20), Rng(0))

    def test_pilot_fit(self, mz_small):
        fit, sub = fit_pilot(mz_small, Scheme.UNIFORM, 200, Rng(3), SolverConfig())
        assert fit.converged
        assert len(sub) == 200
        assert_allclose(sub.probs, 1.0 / mz_small.n)


class TestTwoStep:
    def test_same_seed_same_estimate(self, mz_small):
        cfg = TwoStepConfig(r0=200, r=500)
        first, _ = two_step_estimate(mz_small, cfg, Rng(3))
        second, _ = two_step_estimate(mz_small, cfg, Rng(3))
        assert_array_equal(first.beta, second.beta)

    def test_result_carries_variance_and_timings(self, mz_small):
        fit, variance = two_step_estimate(mz_small, TwoStepConfig(r0=200, r=500), Rng(4))
        assert fit.converged
        assert_allclose(fit.vcov, variance.vcov)
        assert_allclose(fit.se, variance.se)
        assert set(fit.timings) == {"pilot", "ssp", "solve"}

    def test_mvc_never_computes_mx(self, mz_small, monkeypatch):
        monkeypatch.setattr(osmac.estimators, "compute_mx", _refuse)
        monkeypatch.setattr(osmac.estimators, "mx_from_subsample", _refuse)
        fit, _ = two_step_estimate(mz_small, TwoStepConfig(r0=200, r=500, criterion=Scheme.MVC), Rng(5))
        assert fit.converged

    def test_mmse_from_pilot_rows_only(self, mz_small, monkeypatch):
        monkeypatch.setattr(osmac.estimators, "compute_mx", _refuse)
        cfg = TwoStepConfig(r0=200, r=500, criterion=Scheme.MMSE, mx_source=MxSource.PILOT_SUBSAMPLE)
        fit, _ = two_step_estimate(mz_small, cfg, Rng(6))
        assert fit.converged

    @pytest.mark.parametrize("pilot_scheme", [Scheme.UNIFORM, Scheme.CASE_CONTROL])
    @pytest.mark.parametrize("criterion", [Scheme.MMSE, Scheme.MVC])
    def test_every_combination_is_close_to_truth(self, mz_medium, pilot_scheme, criterion):
        cfg = TwoStepConfig(r0=300, r=1500, pilot_scheme=pilot_scheme, criterion=criterion)
        fit, _ = two_step_estimate(mz_medium, cfg, Rng(7))
        assert_allclose(fit.beta, np.full(7, 0.5), atol=0.4)

    def test_dump_ssp(self, mz_small, tmp_path):
        path = tmp_path / "plan.csv"
        two_step_estimate(mz_small, TwoStepConfig(r0=200, r=300, floor=0.1), Rng(8), dump_ssp=path)
        frame = pd.read_csv(path)
        assert len(frame) == mz_small.n
        assert frame["pi"].sum() == pytest.approx(1.0)
        assert frame["pi"].min() >= 0.1 / mz_small.n * (1 - 1e-9)

    def test_max_pilot_attempts_override(self, separable):
        with pytest.raises(PilotSeparationError) as excinfo:
            two_step_estimate(separable, TwoStepConfig(r0=20, r=20), Rng(1), max_pilot_attempts=2)
        assert excinfo.value.attempts == 2

    def test_saturated_pilot_restarts_from_zero(self, mz_small, monkeypatch):
        data = Dataset(np.column_stack([np.ones(mz_small.n), mz_small.x]), mz_small.y)
        real_fit_pilot = osmac.estimators.fit_pilot

        def saturated_pilot(*args, **kwargs):
            fit, sub = real_fit_pilot(*args, **kwargs)
            beta = np.zeros(fit.beta.size)
            beta[0] = 100.0
            return dataclasses.replace(fit, beta=beta), sub

        monkeypatch.setattr(osmac.estimators, "fit_pilot", saturated_pilot)
        fit, _ = two_step_estimate(data, TwoStepConfig(r0=200, r=800, criterion=Scheme.MVC), Rng(12))
        assert fit.converged
        assert np.all(np.isfinite(fit.se))
        assert abs(fit.beta[0]) < 10.0


class TestVariance:
    def test_every_row_once_gives_full_data_matrices(self, mz_small):
        beta = np.full(7, 0.4)
        n = mz_small.n
        sub = Subsample(np.arange(n), np.full(n, 1.0 / n), np.ones(n))
        variance = estimate_variance(sub, mz_small, beta)
        assert_allclose(variance.mx_hat, compute_mx(mz_small, beta).m, rtol=1e-10)

        p = 1.0 / (1.0 + np.exp(-(mz_small.x @ beta)))
        expected_vc = (mz_small.x.T * (mz_small.y - p) ** 2) @ mz_small.x / n**2
        assert_allclose(variance.vc_hat, expected_vc, rtol=1e-10)

        inverse = np.linalg.inv(variance.mx_hat)
        assert_allclose(variance.vcov, inverse @ variance.vc_hat @ inverse, rtol=1e-8)
        assert_allclose(variance.se, np.sqrt(np.diag(variance.vcov)))

    def test_repeated_single_row_is_singular(self, mz_small):
        sub = Subsample(np.zeros(20, dtype=int), np.full(20, 0.5), np.ones(20))
        with pytest.raises(SingularMxHatError):
            estimate_variance(sub, mz_small, np.zeros(7))

    def test_empty_subsample(self, mz_small):
        with pytest.raises(DataError):
            estimate_variance(Subsample([], [], []), mz_small, np.zeros(7))


class TestScaleAcceptance:
    def test_uncapped_scaling_hits_expected_size(self):
        acceptance = np.random.default_rng(0).uniform(0.0, 0.1, 1000)
        scaled = scale_acceptance(acceptance, 20.0)
        assert scaled.sum() == pytest.approx(20.0)
        assert_allclose(scaled / acceptance, scaled[0] / acceptance[0])

    def test_capping(self):
        scaled = scale_acceptance(np.array([0.9, 0.1, 0.1, 0.1, 0.0]), 2.0)
        assert_allclose(scaled, [1.0, 1 / 3, 1 / 3, 1 / 3, 0.0])

    def test_request_above_support_accepts_every_positive_row(self):
        assert_array_equal(scale_acceptance(np.array([0.5, 0.0, 0.2]), 5.0), [1.0, 0.0, 1.0])


class TestLcc:
    def test_estimate_near_truth(self, mz_medium):
        fit = lcc_estimate(mz_medium, 300, Rng(9), r=1500)
        assert fit.converged
        assert set(fit.timings) == {"ssp", "solve"}
        assert squared_error(fit.beta, np.full(7, 0.5)) < 1.0

    def test_unscaled_acceptance(self, mz_small):
        fit = lcc_estimate(mz_small, 200, Rng(10))
        assert np.all(np.isfinite(fit.beta))

    def test_degenerate_classes(self):
        data = Dataset(np.random.default_rng(0).standard_normal((20, 2)), np.zeros(20))
        with pytest.raises(DegenerateClassesError):
            lcc_estimate(data, 10, Rng(0))

    def test_pilot_attempts(self, separable):
        with pytest.raises(PilotSeparationError) as excinfo:
            lcc_estimate(separable, 20, Rng(0), max_pilot_attempts=3)
        assert excinfo.value.attempts == 3

    def test_empty_acceptance(self, mz_small, monkeypatch):
        monkeypatch.setattr(
            osmac.estimators,
            "ssp_lcc_acceptance",
            lambda data, beta: SamplingPlan(np.zeros(data.n), Scheme.LCC_ACCEPTANCE),
        )
        with pytest.raises(EmptyAcceptanceError):
            lcc_estimate(mz_small, 200, Rng(11))

    def test_dump_ssp(self, mz_small, tmp_path):
        path = tmp_path / "acceptance.csv"
        lcc_estimate(mz_small, 200, Rng(12), r=400, dump_ssp=path)
        frame = pd.read_csv(path)
        assert frame["pi"].sum() == pytest.approx(400.0)


def test_single_distinct_row_subsample_is_singular():
    x = np.tile([[1.0, 0.2]], (10, 1))
    data = Dataset(x, [0, 1] * 5)
    plan = ssp_uniform(data.n)
    with pytest.raises(SingularHessianError):
        algorithm1_estimate(data, plan, 8, Rng(0))


@pytest.mark.slow
class TestEfficiency:
    REPS = 200

    def _mse(self, estimate):
        errors = [squared_error(estimate(Rng(100, s)), np.full(7, 0.5)) for s in range(self.REPS)]
        return float(np.mean(errors))

    def test_optimal_plans_beat_uniform(self, mz_medium):
        uniform = self._mse(lambda rng: algorithm1_estimate(mz_medium, ssp_uniform(mz_medium.n), 1000, rng)[0].beta)
        mvc = self._mse(lambda rng: two_step_estimate(mz_medium, TwoStepConfig(r0=200, r=800), rng)[0].beta)
        mmse_cfg = TwoStepConfig(r0=200, r=800, criterion=Scheme.MMSE)
        mmse = self._mse(lambda rng: two_step_estimate(mz_medium, mmse_cfg, rng)[0].beta)
        assert mvc < uniform
        assert mmse < uniform

    def test_variance_estimate_tracks_spread(self, mz_medium):
        cfg = TwoStepConfig(r0=200, r=800, criterion=Scheme.MMSE)
        fits = [two_step_estimate(mz_medium, cfg, Rng(200, s))[0] for s in range(self.REPS)]
        betas = np.array([fit.beta for fit in fits])
        empirical = np.trace(np.cov(betas, rowvar=False))
        estimated = float(np.mean([np.trace(fit.vcov) for fit in fits]))
        assert 0.8 < estimated / empirical < 1.25
