"""Synthetic-dataset generator tests: curve formulas, grid layout, and the
shifted-exponential noise law."""

import numpy as np
import pytest
from scipy.stats import norm

from splineqr import InvalidInputError, generate_example
from splineqr.simulate import (
    NOISE_RATE,
    NOISE_SHIFT,
    example1_curve,
    example2_curve,
    example3_curve,
    noise_draws,
)


class TestCurves:
    def test_example1_curve_is_two_bump_density_mix(self):
        x = np.array([0.0, 0.15, 0.6, 1.0])
        expected = norm.pdf(x, 0.15, 0.05) / 4 + norm.pdf(x, 0.6, 0.2) / 4
        np.testing.assert_allclose(example1_curve(x), expected, rtol=1e-12)

    def test_example1_value_at_first_bump(self):
        # phi(0.15; 0.15, 0.05^2)/4 + phi(0.15; 0.6, 0.2^2)/4
        val = example1_curve(0.15)
        direct = norm.pdf(0.15, 0.15, 0.05) / 4 + norm.pdf(0.15, 0.6, 0.2) / 4
        assert val == pytest.approx(direct, rel=1e-12)
        assert val == pytest.approx(2.0344, abs=5e-4)

    def test_example2_curve_matches_unrescaled_formula(self):
        u = np.linspace(0, 1, 11)
        t = 4 * u - 2
        np.testing.assert_allclose(
            example2_curve(u), np.sin(2 * t) + 2 * np.exp(-16 * t**2), rtol=1e-12
        )

    def test_example3_curve_matches_unrescaled_formula(self):
        u = np.linspace(0, 1, 11)
        t = 4 * u - 2
        np.testing.assert_allclose(
            example3_curve(u), np.sin(t) + 2 * np.exp(-30 * t**2), rtol=1e-12
        )


class TestGenerateExample:
    def test_standard_sizes(self):
        assert generate_example(1, seed=0).n == 200
        assert generate_example(2, seed=0).n == 201
        assert generate_example(3, seed=0).n == 201

    def test_size_override(self):
        assert generate_example(2, seed=0, n=1000).n == 1000

    def test_example1_covariate_is_uniform_draws(self):
        data = generate_example(1, seed=5)
        x = data.x[:, 0]
        assert x.min() >= 0 and x.max() <= 1
        assert len(np.unique(x)) == 200

    def test_examples_2_3_use_unit_regular_grid(self):
        for which in (2, 3):
            data = generate_example(which, seed=1)
            np.testing.assert_allclose(data.x[:, 0], np.linspace(0, 1, 201))

    def test_truth_column_is_noise_free_curve(self):
        data = generate_example(3, seed=2)
        np.testing.assert_allclose(data.truth, example3_curve(data.x[:, 0]))
        assert np.all(data.y != data.truth)

    def test_seed_determinism(self):
        d1 = generate_example(1, seed=33)
        d2 = generate_example(1, seed=33)
        np.testing.assert_array_equal(d1.x, d2.x)
        np.testing.assert_array_equal(d1.y, d2.y)

    def test_invalid_example_rejected(self):
        with pytest.raises(InvalidInputError):
            generate_example(4, seed=0)


class TestNoise:
    def test_median_closed_form(self):
        # inverse-CDF draws: the median is exactly ln(2)/rate + shift
        exact = np.log(2.0) / NOISE_RATE + NOISE_SHIFT
        assert exact == pytest.approx(-0.0017132, abs=1e-7)
        rng = np.random.default_rng(0)
        draws = noise_draws(400_000, rng)
        assert np.median(draws) == pytest.approx(exact, abs=2e-3)

    def test_rate_and_shift(self):
        rng = np.random.default_rng(1)
        draws = noise_draws(400_000, rng)
        assert draws.min() >= NOISE_SHIFT
        assert draws.mean() == pytest.approx(1.0 / NOISE_RATE + NOISE_SHIFT, abs=2e-3)
