"""Tests of the database model, the samplers and the score table."""
import itertools
from collections import Counter

import numpy as np
import pytest

from dbalign.errors import ParameterError, DegenerateInputError
from dbalign.model import (
    Hypothesis,
    ModelParams,
    DatabasePair,
    ScoreTable,
    make_rng,
    random_permutation,
    inverse_permutation,
    sample_h0,
    sample_h1,
    score_table,
)


class TestModelParams:

    @pytest.mark.parametrize('rho', [0.0, 1.0, -0.3, 1.5])
    def test_rejects_rho_outside_open_unit_interval(self, rho):
        with pytest.raises(ParameterError):
            ModelParams(n=5, d=3, rho=rho)

    def test_rejects_non_permutation(self):
        with pytest.raises(ParameterError):
            ModelParams(n=3, d=2, rho=0.5, sigma=(0, 0, 1))

    def test_identity_is_the_default_permutation(self):
        np.testing.assert_array_equal(ModelParams(n=4, d=2).permutation, np.arange(4))

    def test_parameter_error_is_a_value_error(self):
        with pytest.raises(ValueError):
            ModelParams(n=0, d=3)


class TestSampling:

    def test_h0_shapes_and_label(self):
        db = sample_h0(ModelParams(n=200, d=50), seed=1)
        assert db.x.shape == (200, 50)
        assert db.y.shape == (200, 50)
        assert db.truth.hypothesis == Hypothesis.H0
        assert db.truth.sigma is None

    def test_same_seed_gives_identical_pairs(self, small_params):
        first = sample_h1(small_params, seed=42)
        second = sample_h1(small_params, seed=42)
        np.testing.assert_array_equal(first.x, second.x)
        np.testing.assert_array_equal(first.y, second.y)

    def test_different_seeds_give_different_pairs(self, small_params):
        assert not np.array_equal(sample_h1(small_params, seed=1).x, sample_h1(small_params, seed=2).x)

    def test_h0_rows_have_unit_variance(self):
        db = sample_h0(ModelParams(n=10, d=100_000), seed=3)
        variances = db.x.var(axis=1)
        assert np.all((variances > 0.97) & (variances < 1.03))

    def test_h1_matched_rows_have_correlation_rho(self):
        db = sample_h1(ModelParams(n=1, d=100_000, rho=0.5), seed=4)
        correlation = np.corrcoef(db.x[0], db.y[0])[0, 1]
        assert abs(correlation - 0.5) < 0.01

    def test_h1_near_one_correlation(self):
        db = sample_h1(ModelParams(n=5, d=10_000, rho=0.999), seed=5)
        for row in range(5):
            assert np.corrcoef(db.x[row], db.y[row])[0, 1] >= 0.99

    def test_h1_partner_is_stored_in_row_sigma(self):
        sigma = (2, 0, 3, 1)
        db = sample_h1(ModelParams(n=4, d=1000, rho=0.99, sigma=sigma), seed=6)
        np.testing.assert_array_equal(db.truth.sigma, sigma)
        for row, column in enumerate(sigma):
            assert np.corrcoef(db.x[row], db.y[column])[0, 1] > 0.95

    def test_h1_needs_rho(self):
        with pytest.raises(ParameterError):
            sample_h1(ModelParams(n=3, d=3), seed=0)

    def test_negative_seed_is_rejected(self):
        with pytest.raises(ParameterError):
            make_rng(-1)

    def test_streams_are_distinct(self):
        first = make_rng(9, 0).standard_normal(5)
        second = make_rng(9, 1).standard_normal(5)
        assert not np.array_equal(first, second)


class TestPermutations:

    def test_n_one(self):
        np.testing.assert_array_equal(random_permutation(1, seed=0), [0])

    def test_reproducible(self):
        np.testing.assert_array_equal(random_permutation(50, seed=11), random_permutation(50, seed=11))

    def test_uniform_over_s3(self):
        draws = 60_000
        counts = Counter(tuple(random_permutation(3, seed=seed)) for seed in range(draws))
        assert set(counts) == set(itertools.permutations(range(3)))
        for count in counts.values():
            assert abs(count / draws - 1.0 / 6.0) < 0.01

    def test_inverse(self):
        sigma = random_permutation(30, seed=2)
        np.testing.assert_array_equal(sigma[inverse_permutation(sigma)], np.arange(30))


class TestDatabasePair:

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            DatabasePair(x=np.ones((3, 2)), y=np.ones((3, 3)))

    def test_non_finite_entries(self):
        x = np.ones((2, 2))
        x[0, 1] = np.nan
        with pytest.raises(ParameterError):
            DatabasePair(x=x, y=np.ones((2, 2)))


class TestScoreTable:

    def test_identical_rows_score_one(self):
        x = np.array([[1.0, 2.0, 3.0], [0.0, 1.0, 0.0]])
        table = score_table(DatabasePair(x=x, y=x.copy()))
        np.testing.assert_allclose(np.diag(table.s), 1.0)

    def test_orthogonal_rows_score_zero(self):
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        y = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(np.diag(score_table(DatabasePair(x=x, y=y)).s), 0.0)

    def test_invariant_to_positive_row_scaling(self, small_params):
        db = sample_h1(small_params, seed=12)
        scales = np.linspace(0.1, 10.0, small_params.n)[:, np.newaxis]
        scaled = DatabasePair(x=db.x * scales, y=db.y * scales[::-1])
        np.testing.assert_allclose(score_table(scaled).s, score_table(db).s, atol=1e-12)

    def test_entries_are_cosines(self, small_params):
        table = score_table(sample_h0(small_params, seed=13))
        assert table.n == small_params.n
        assert np.all(np.abs(table.s) <= 1.0 + 1e-12)

    def test_zero_row_is_degenerate(self):
        x = np.array([[1.0, 2.0], [0.0, 0.0]])
        with pytest.raises(DegenerateInputError):
            score_table(DatabasePair(x=x, y=np.ones((2, 2))))

    def test_table_must_be_square(self):
        with pytest.raises(ParameterError):
            ScoreTable(s=np.zeros((2, 3)))
