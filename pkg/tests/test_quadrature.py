"""Tests for Gaussian partial moments and grid-function integration."""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from mf.quadrature import (
    GaussianTransition,
    GridInterpolant,
    find_crossover,
    gaussian_partial_moment,
    gaussian_partial_moments,
    integrate_grid_function,
    integrate_with_kink,
    neville_coeffs,
)

HALF_NORMAL_MEAN = 1.0 / np.sqrt(2.0 * np.pi)


def test_partial_moment_basics():
    """Test the zeroth and first moments and the k = −1 convention."""
    assert gaussian_partial_moment(0, 0.3, 0.3, 2.0) == pytest.approx(0.5)
    assert gaussian_partial_moment(1, 0.0, 0.0, 1.0) == pytest.approx(-HALF_NORMAL_MEAN)
    assert gaussian_partial_moment(-1, 0.7, 0.0, 1.0) == 0.0
    # Full-line moments of a standard normal
    full = gaussian_partial_moments(4, np.inf, 0.0, 1.0)
    assert full.tolist() == pytest.approx([1.0, 0.0, 1.0, 0.0, 3.0])


@pytest.mark.parametrize("k", range(9))
def test_partial_moments_match_numeric_quadrature(k):
    """Test G(k; h) against adaptive quadrature."""
    h, mu, sigma = 0.7, 0.2, 1.3
    expected, _ = quad(lambda x: x ** k * norm.pdf(x, mu, sigma), -np.inf, h,
                       epsabs=1e-13, epsrel=1e-13)
    assert gaussian_partial_moment(k, h, mu, sigma) == pytest.approx(
        expected, abs=1e-9 * max(1.0, abs(expected)))


def test_neville_recovers_cubic():
    """Test that the Neville recurrence returns the monomial coefficients of a cubic."""
    x = np.array([0.0, 1.0, 2.0, 3.0])
    f = 1.0 + 2.0 * x - x ** 2 + 0.5 * x ** 3
    assert neville_coeffs(x, f) == pytest.approx([1.0, 2.0, -1.0, 0.5], abs=1e-12)
    with pytest.raises(ValueError):
        neville_coeffs([0.0, 0.0], [1.0, 2.0])


@pytest.mark.parametrize("degree", range(4))
def test_polynomials_integrate_exactly(degree):
    """Test that polynomials up to the stencil order integrate exactly inside the grid."""
    x = np.linspace(-5.0, 5.0, 41)
    coeffs = np.array([0.3, -1.2, 0.7, 0.25])[:degree + 1]
    values = np.polyval(coeffs[::-1], x)
    mu, sigma = 0.4, 1.1
    moments = gaussian_partial_moments(degree, x[-1], mu, sigma) - \
        gaussian_partial_moments(degree, x[0], mu, sigma)
    expected = float(coeffs @ moments)
    expected += norm.cdf((x[0] - mu) / sigma) * values[0]
    expected += norm.sf((x[-1] - mu) / sigma) * values[-1]
    assert integrate_grid_function(x, values, mu, sigma, order=3) == pytest.approx(
        expected, abs=1e-12)


def test_kinked_payoff_half_normal():
    """Test E[max(X, 0)] for a crossover on and off the grid."""
    for x in (np.linspace(-8.0, 8.0, 161), np.linspace(-8.05, 7.95, 161)):
        step = GaussianTransition(x, [0.0], 1.0, order=3)
        value = step.expect_max(x, np.zeros_like(x))[0]
        assert value == pytest.approx(HALF_NORMAL_MEAN, abs=1e-8)
    x = np.linspace(-8.05, 7.95, 161)
    assert integrate_with_kink(x, np.zeros_like(x), x, 0.0, 0.0, 1.0) == pytest.approx(
        HALF_NORMAL_MEAN, abs=1e-8)


def test_crossover_search():
    """Test that the crossover of two grid functions is located inside its interval."""
    x = np.linspace(-2.0, 2.0, 21)
    points = find_crossover(x, x, np.full_like(x, 0.33))
    assert points == pytest.approx([0.33], abs=1e-10)
    with pytest.raises(ValueError):
        integrate_with_kink(x, x, x, 2.5, 0.0, 1.0)


def test_cumulative_splits_expectation():
    """Test that lower and upper partial expectations add up to the full one."""
    x = np.linspace(-4.0, 4.0, 81)
    values = np.exp(0.3 * x)
    step = GaussianTransition(x, [0.1], 0.9, order=3)
    lower, upper = step.cumulative(values)
    total = step.expect(values)[0]
    assert np.allclose(lower + upper, total, rtol=1e-12)
    assert lower[0] == pytest.approx(norm.cdf((x[0] - 0.1) / 0.9) * values[0])
    assert np.all(np.diff(lower) > 0)


def test_transition_rows_are_probabilities():
    """Test that every transition row integrates a constant to itself."""
    x = np.linspace(-3.0, 3.0, 31)
    step = GaussianTransition(x, np.linspace(-2.0, 2.0, 5), 0.5, order=3)
    assert step.expect(np.ones_like(x)) == pytest.approx(np.ones(5), abs=1e-12)


def test_interpolant_needs_enough_nodes():
    """Test that a stencil longer than the grid is refused."""
    with pytest.raises(ValueError):
        GridInterpolant([0.0, 1.0, 2.0], order=3)
