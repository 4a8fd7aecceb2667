"""Tests for seeded RNG streams, reference linear algebra, and the gradient checker."""

import numpy as np
import pytest

from qbrn.errors import DimensionError, NumericalError
from qbrn.numerics import Rng, finite_diff_check, matvec, softmax_rows


class TestRng:
    def test_same_key_same_sequence(self):
        a = Rng(123, stream=5).uniform(1000)
        b = Rng(123, stream=5).uniform(1000)
        np.testing.assert_array_equal(a, b)

    def test_million_draw_reproducibility(self):
        a = Rng(42, stream=0).uniform(1_000_000)
        b = Rng(42, stream=0).uniform(1_000_000)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = Rng(42, stream=0).uniform(100)
        b = Rng(42, stream=1).uniform(100)
        assert not np.array_equal(a, b)

    def test_seeds_differ(self):
        a = Rng(1).uniform(100)
        b = Rng(2).uniform(100)
        assert not np.array_equal(a, b)

    def test_draw_order_independence_across_streams(self):
        """Values on one stream do not depend on what other streams drew."""
        fresh = Rng(9, stream=3).normal(17)
        r0 = Rng(9, stream=0)
        r0.normal(1000)
        interleaved = Rng(9, stream=3).normal(17)
        np.testing.assert_array_equal(fresh, interleaved)

    def test_negative_seed_accepted(self):
        vals = Rng(-7, stream=2).uniform(8)
        assert vals.shape == (8,)


class TestMatvec:
    def test_identity(self):
        np.testing.assert_array_equal(matvec(np.eye(3), np.array([1.0, 2.0, 3.0])), [1, 2, 3])

    def test_zero_matrix(self):
        np.testing.assert_array_equal(matvec(np.zeros((2, 2)), np.array([5.0, 7.0])), [0, 0])

    def test_hand_case(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(matvec(m, np.array([1.0, 1.0])), [3, 7])

    def test_against_naive_loop_oracle(self):
        rng = Rng(3)
        for _ in range(20):
            m = rng.uniform((5, 7), low=-1, high=1)
            v = rng.uniform(7, low=-1, high=1)
            expected = [sum(m[i, k] * v[k] for k in range(7)) for i in range(5)]
            np.testing.assert_allclose(matvec(m, v), expected, atol=1e-12)

    def test_linearity(self):
        rng = Rng(11)
        for _ in range(30):
            m = rng.uniform((6, 6), low=-1, high=1)
            u = rng.uniform(6, low=-1, high=1)
            v = rng.uniform(6, low=-1, high=1)
            alpha, beta = rng.uniform(2, low=-1, high=1)
            left = matvec(m, alpha * u + beta * v)
            right = alpha * matvec(m, u) + beta * matvec(m, v)
            np.testing.assert_allclose(left, right, atol=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            matvec(np.eye(3), np.array([1.0, 2.0]))


class TestSoftmaxRows:
    def test_equal_logits_uniform(self):
        np.testing.assert_allclose(softmax_rows(np.zeros((1, 3)))[0], [1 / 3] * 3, atol=1e-15)

    def test_dominance_limit(self):
        out = softmax_rows(np.array([[1000.0, 0.0, 0.0]]))[0]
        assert out[0] == pytest.approx(1.0, abs=1e-300)
        assert out[1] < 1e-300 and out[2] < 1e-300

    def test_log_ratio_row(self):
        out = softmax_rows(np.log(np.array([[1.0, 2.0, 3.0]])))[0]
        np.testing.assert_allclose(out, [1 / 6, 2 / 6, 3 / 6], atol=1e-15)

    def test_rows_sum_to_one(self):
        rng = Rng(5)
        m = rng.uniform((20, 9), low=-50, high=50)
        sums = softmax_rows(m).sum(axis=1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    def test_shift_invariance(self):
        rng = Rng(6)
        m = rng.uniform((10, 4), low=-5, high=5)
        shifted = m + rng.uniform((10, 1), low=-100, high=100)
        assert np.max(np.abs(softmax_rows(m) - softmax_rows(shifted))) < 1e-12


class TestFiniteDiffCheck:
    def test_quadratic_passes(self):
        report = finite_diff_check(
            lambda x: float(x[0] ** 2), np.array([6.0]), np.array([3.0]), step=1e-6, tolerance=1e-4
        )
        assert report.passed

    def test_wrong_gradient_fails(self):
        report = finite_diff_check(
            lambda x: float(x[0] ** 2), np.array([5.0]), np.array([3.0]), step=1e-6, tolerance=1e-4
        )
        assert not report.passed
        assert report.max_rel_error == pytest.approx(1 / 6, abs=1e-3)

    def test_sine_passes(self):
        report = finite_diff_check(
            lambda x: float(np.sin(x[0])), np.array([1.0]), np.array([0.0]), step=1e-6, tolerance=1e-4
        )
        assert report.passed

    def test_non_finite_value_raises(self):
        with pytest.raises(NumericalError):
            finite_diff_check(
                lambda x: float("nan"), np.array([1.0]), np.array([0.0]), step=1e-6, tolerance=1e-4
            )

    def test_reports_worst_coordinate(self):
        grad = np.array([2.0, 999.0])
        report = finite_diff_check(
            lambda x: float(x[0] ** 2 + x[1] ** 2), grad, np.array([1.0, 1.0])
        )
        assert report.worst_index == 1
        assert not report.passed
