"""Tests for the data containers and file formats."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from osmac.datamodel import (
    BINARY_MAGIC,
    Dataset,
    FitResult,
    SamplingPlan,
    Scheme,
    Step,
    Subsample,
    class_counts,
    load_csv,
    read_binary,
    write_binary,
    write_csv,
)
from osmac.errors import DataError, NotNormalizedError, ParseError, SchemaError
from osmac.sampler import Rng


class TestDataset:
    def test_shapes_and_types(self):
        data = Dataset([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], [0, 1, 1])
        assert (data.n, data.d) == (3, 2)
        assert data.x.dtype == np.float64
        assert data.y.dtype == np.uint8

    def test_arrays_are_read_only(self):
        data = Dataset([[1.0], [2.0]], [0, 1])
        with pytest.raises(ValueError):
            data.x[0, 0] = 5.0

    def test_non_binary_response_rejected(self):
        with pytest.raises(SchemaError):
            Dataset([[1.0], [2.0]], [0, 2])

    def test_row_mismatch_rejected(self):
        with pytest.raises(DataError):
            Dataset([[1.0], [2.0]], [0, 1, 1])

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            Dataset([[np.nan], [2.0]], [0, 1])

    def test_class_counts(self):
        data = Dataset(np.ones((5, 1)), [0, 1, 1, 0, 1])
        assert class_counts(data) == (2, 3)

    def test_take_allows_repeats(self):
        data = Dataset([[1.0], [2.0], [3.0]], [0, 1, 0])
        taken = data.take([2, 2, 0])
        assert_array_equal(taken.x[:, 0], [3.0, 3.0, 1.0])
        assert_array_equal(taken.y, [0, 0, 0])

    def test_split_is_deterministic_and_disjoint(self, mz_small):
        train1, valid1 = mz_small.split(0.25, Rng(3))
        train2, valid2 = mz_small.split(0.25, Rng(3))
        assert valid1.n == 500
        assert train1.n == 1500
        assert_array_equal(valid1.x, valid2.x)
        assert_array_equal(train1.y, train2.y)

    def test_split_rejects_bad_fraction(self, mz_small):
        with pytest.raises(DataError):
            mz_small.split(1.0, Rng(0))


class TestSamplingPlan:
    def test_replacement_plan_must_sum_to_one(self):
        with pytest.raises(NotNormalizedError):
            SamplingPlan([0.5, 0.6], Scheme.UNIFORM)

    def test_negative_entries_rejected(self):
        with pytest.raises(DataError):
            SamplingPlan([1.5, -0.5], Scheme.MVC)

    def test_acceptance_plan_need_not_sum_to_one(self):
        plan = SamplingPlan([0.9, 0.9, 0.0], Scheme.LCC_ACCEPTANCE)
        assert plan.n == 3

    def test_acceptance_above_one_rejected(self):
        with pytest.raises(DataError):
            SamplingPlan([1.2, 0.1], Scheme.LCC_ACCEPTANCE)


class TestSubsample:
    def test_zero_probability_rejected(self):
        with pytest.raises(DataError):
            Subsample([0, 1], [0.5, 0.0], [1, 1])

    def test_pool_keeps_each_probability(self):
        first = Subsample([0, 1], [0.1, 0.2], [Step.STEP1, Step.STEP1])
        second = Subsample([1, 3], [0.3, 0.4], [Step.STEP2, Step.STEP2])
        pooled = first.pool(second)
        assert len(pooled) == 4
        assert_array_equal(pooled.indices, [0, 1, 1, 3])
        assert_array_equal(pooled.probs, [0.1, 0.2, 0.3, 0.4])
        assert_array_equal(pooled.step_tag, [1, 1, 2, 2])

    def test_check_bounds(self):
        sub = Subsample([0, 5], [0.5, 0.5], [1, 1])
        sub.check_bounds(6)
        with pytest.raises(DataError):
            sub.check_bounds(5)


class TestFitResult:
    def test_with_vcov_sets_standard_errors(self):
        fit = FitResult(beta=[1.0, 2.0], converged=True, iterations=3)
        updated = fit.with_vcov(np.array([[4.0, 1.0], [1.0, 9.0]]))
        assert_array_equal(updated.se, [2.0, 3.0])
        assert fit.se is None

    def test_with_timings_merges(self):
        fit = FitResult(beta=[0.0], converged=True, iterations=1, timings={"ssp": 1.0})
        assert fit.with_timings(solve=2.0).timings == {"ssp": 1.0, "solve": 2.0}


class TestLoadCsv:
    def test_intercept_prepended(self, csv_file):
        data = load_csv(csv_file)
        assert (data.n, data.d) == (300, 3)
        assert data.feature_names == ("intercept", "a", "b")
        assert_array_equal(data.x[:, 0], np.ones(300))

    def test_response_by_name_without_intercept(self, csv_file):
        data = load_csv(csv_file, response_column="label", intercept=False)
        assert data.feature_names == ("a", "b")

    def test_non_numeric_covariate_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,y\n1.0,0\noops,1\n", encoding="utf-8")
        with pytest.raises(ParseError) as excinfo:
            load_csv(path)
        assert excinfo.value.row == 3

    def test_missing_covariate_is_parse_error(self, tmp_path):
        path = tmp_path / "missing.csv"
        path.write_text("a,y\n1.0,0\n,1\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_csv(path)

    def test_non_binary_response_is_schema_error(self, tmp_path):
        path = tmp_path / "response.csv"
        path.write_text("a,y\n1.0,0\n2.0,2\n", encoding="utf-8")
        with pytest.raises(SchemaError) as excinfo:
            load_csv(path)
        assert excinfo.value.row == 3

    def test_ragged_row_is_parse_error(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("a,y\n1.0,0\n2.0,1,7\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_csv(path)

    def test_unknown_response_column(self, csv_file):
        with pytest.raises(SchemaError):
            load_csv(csv_file, response_column="nope")


class TestWriters:
    def test_csv_reload_is_bit_exact(self, mz_small, tmp_path):
        path = tmp_path / "mz.csv"
        write_csv(mz_small, path)
        reloaded = load_csv(path, intercept=False)
        assert_array_equal(reloaded.x, mz_small.x)
        assert_array_equal(reloaded.y, mz_small.y)
        assert reloaded.feature_names == mz_small.feature_names

    def test_csv_with_intercept_column_is_not_doubled(self, tmp_path):
        data = Dataset(np.column_stack([np.ones(4), [0.1, 0.2, 0.3, 0.4]]), [0, 1, 0, 1], ("intercept", "x1"))
        path = tmp_path / "with_intercept.csv"
        write_csv(data, path)
        assert load_csv(path).d == 2

    def test_csv_feature_names_override(self, tmp_path):
        data = Dataset(np.array([[0.5, 1.0], [1.5, -2.0]]), [1, 0])
        path = tmp_path / "named.csv"
        write_csv(data, path, response_name="label", feature_names=["a", "b"])
        assert path.read_text(encoding="utf-8").splitlines()[0] == "a,b,label"
        with pytest.raises(SchemaError):
            write_csv(data, path, feature_names=["only"])

    def test_binary_reload(self, mz_small, tmp_path):
        path = tmp_path / "mz.bin"
        write_binary(mz_small, path)
        reloaded = read_binary(path)
        assert_array_equal(reloaded.x, mz_small.x)
        assert_array_equal(reloaded.y, mz_small.y)

    def test_binary_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE!" + bytes(16))
        with pytest.raises(ParseError):
            read_binary(path)

    def test_binary_truncated(self, mz_small, tmp_path):
        path = tmp_path / "short.bin"
        write_binary(mz_small, path)
        payload = path.read_bytes()
        path.write_bytes(payload[:-10])
        with pytest.raises(ParseError):
            read_binary(path)
        assert payload.startswith(BINARY_MAGIC)
