import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plaft.errors import DimensionError, KnotDegeneracyError
from plaft.splines import (AdditiveBasisSpec, SplineBasisSpec, eval_basis, eval_phi,
                           place_knots)


def manual_quantile(sorted_vals, level):
    """Independent linear-interpolation quantile (oracle)."""
    h = (len(sorted_vals) - 1) * level
    lo = int(np.floor(h))
    hi = min(lo + 1, len(sorted_vals) - 1)
    return sorted_vals[lo] + (h - lo) * (sorted_vals[hi] - sorted_vals[lo])


class TestPlaceKnots:
    def test_median_of_symmetric_set(self):
        assert list(place_knots([0, 1, 2, 3, 4], 1)) == [2.0]

    def test_quartiles_of_integers(self):
        knots = place_knots(np.arange(11.0), 3)
        assert np.allclose(knots, [2.5, 5.0, 7.5])

    def test_uniform_draws_against_oracle(self, rng):
        values = rng.uniform(-5, 5, size=100)
        knots = place_knots(values, 4)
        sv = sorted(values)
        expected = [manual_quantile(sv, k / 5) for k in (1, 2, 3, 4)]
        assert np.allclose(knots, expected, atol=1e-12)
        assert all(b > a for a, b in zip(knots, knots[1:]))

    def test_too_few_distinct_values(self):
        with pytest.raises(KnotDegeneracyError) as err:
            place_knots([1.0, 1.0, 2.0, 2.0], 3)
        assert err.value.achievable == 0

    def test_tie_collapse_warns(self):
        # 12 distinct values (enough for r=9) but quantiles collapse onto
        # the heavy atom at zero
        values = np.concatenate([np.zeros(100), np.arange(1.0, 12.0)])
        with pytest.warns(UserWarning, match="collapsed"):
            knots = place_knots(values, 9)
        assert 1 <= len(knots) < 9
        assert all(b > a for a, b in zip(knots, knots[1:]))

    def test_r_must_be_positive(self):
        with pytest.raises(ValueError):
            place_knots([0.0, 1.0, 2.0], 0)


class TestEvalBasis:
    def test_vanishes_at_origin_with_positive_knots(self):
        spec = SplineBasisSpec(3, (1.0, 2.0))
        assert np.array_equal(eval_basis(spec, 0.0), np.zeros(5))

    def test_hand_arithmetic_linear(self):
        spec = SplineBasisSpec(1, (0.0,))
        assert np.allclose(eval_basis(spec, 2.0), [2.0, 2.0])

    def test_cubic_with_negative_knot(self):
        spec = SplineBasisSpec(3, (-1.0, 0.0, 1.0))
        got = eval_basis(spec, 0.5)
        assert np.allclose(got, [0.5, 0.25, 0.125, 3.375, 0.125, 0.0], atol=1e-15)

    def test_vectorized_matches_scalar(self, rng):
        spec = SplineBasisSpec(2, (-0.5, 0.7))
        xs = rng.normal(size=7)
        mat = eval_basis(spec, xs)
        for i, x in enumerate(xs):
            assert np.array_equal(mat[i], eval_basis(spec, float(x)))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SplineBasisSpec(0, (1.0,))
        with pytest.raises(ValueError):
            SplineBasisSpec(3, (1.0, 1.0))
        spec = SplineBasisSpec(3, (0.0, 1.0))
        assert spec.M == 5 and spec.r == 2


class TestEvalPhi:
    def test_zero_coefficients(self, rng):
        spec = SplineBasisSpec(3, (-1.0, 1.0))
        for x in rng.normal(size=5):
            assert eval_phi(spec, np.zeros(spec.M), float(x)) == 0.0

    def test_hand_arithmetic(self):
        spec = SplineBasisSpec(1, (0.0,))
        assert eval_phi(spec, [1.0, -2.0], 3.0) == pytest.approx(-3.0, abs=1e-15)

    def test_random_cubic_against_hinge_oracle(self, rng):
        spec = SplineBasisSpec(3, (-1.2, 0.3, 1.9))
        beta = rng.normal(size=spec.M)

        def oracle(x):
            total = sum(beta[m - 1] * x ** m for m in (1, 2, 3))
            for k, knot in enumerate(spec.knots):
                total += beta[3 + k] * max(0.0, x - knot) ** 3
            return total

        for x in rng.uniform(-3, 3, size=20):
            assert eval_phi(spec, beta, float(x)) == pytest.approx(oracle(float(x)),
                                                                   abs=1e-12, rel=1e-12)

    def test_dimension_error(self):
        spec = SplineBasisSpec(3, (0.0,))
        with pytest.raises(DimensionError):
            eval_phi(spec, np.zeros(3), 0.5)


class TestSplineProperties:
    @given(st.floats(-3, 3), st.integers(2, 3))
    @settings(max_examples=40, deadline=None)
    def test_continuity_at_knots(self, knot, degree):
        spec = SplineBasisSpec(degree, (float(knot),))
        beta = np.arange(1.0, spec.M + 1)
        h = 1e-7
        left = eval_phi(spec, beta, knot - h)
        right = eval_phi(spec, beta, knot + h)
        assert abs(left - right) < 1e-5 * (1 + abs(left))

    def test_first_derivative_continuous_for_cubic(self, rng):
        spec = SplineBasisSpec(3, (-0.8, 0.4, 1.5))
        beta = rng.normal(size=spec.M)
        h = 1e-5

        def phi(x):
            return eval_phi(spec, beta, x)

        for knot in spec.knots:
            # second-order one-sided difference quotients on either side
            d_left = (3 * phi(knot) - 4 * phi(knot - h) + phi(knot - 2 * h)) / (2 * h)
            d_right = (-3 * phi(knot) + 4 * phi(knot + h) - phi(knot + 2 * h)) / (2 * h)
            assert abs(d_left - d_right) < 1e-6 * (1 + abs(d_left))

    def test_pure_polynomial_below_first_knot(self, rng):
        spec = SplineBasisSpec(3, (0.5, 1.5))
        beta = rng.normal(size=spec.M)
        for x in (-2.0, 0.0, 0.49):
            poly = beta[0] * x + beta[1] * x ** 2 + beta[2] * x ** 3
            assert eval_phi(spec, beta, x) == poly

    def test_hinge_activates_only_past_its_knot(self):
        spec = SplineBasisSpec(2, (-1.0, 1.0))
        b = eval_basis(spec, 0.0)
        assert b[2] == 1.0  # (0 - (-1))^2
        assert b[3] == 0.0  # knot at 1 not yet active


class TestAdditiveBasisSpec:
    def test_layout_helpers(self):
        spec = AdditiveBasisSpec((SplineBasisSpec(3, (0.0, 1.0)),
                                  SplineBasisSpec(2, (0.5,))))
        assert spec.total_M == 5 + 3
        assert [((s.start, s.stop)) for s in spec.block_slices()] == [(0, 5), (5, 8)]
        assert list(spec.knot_columns()) == [3, 4, 7]

    def test_type_check(self):
        with pytest.raises(TypeError):
            AdditiveBasisSpec((3,))
