"""Tests for the Gaussian driver and its lattice grid."""

import numpy as np
import pytest
from scipy.integrate import quad

from mf.driver import DriverSpec


def test_variance_closed_form():
    """Test the driver variance with and without mean reversion."""
    assert DriverSpec(0.0).variance(1.0, 3.5) == pytest.approx(2.5)
    a = 0.1
    expected, _ = quad(lambda u: np.exp(2 * a * u), 1.0, 3.5)
    assert DriverSpec(a).variance(1.0, 3.5) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        DriverSpec(a).variance(2.0, 1.0)


def test_autocorrelation():
    """Test that zero mean reversion gives sqrt(t/s) and positive reversion lowers it."""
    assert DriverSpec(0.0).autocorrelation(1.0, 4.0) == pytest.approx(0.5)
    assert DriverSpec(0.1).autocorrelation(1.0, 4.0) < 0.5
    assert DriverSpec(0.1).autocorrelation(2.0, 2.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        DriverSpec(0.0).autocorrelation(0.0, 1.0)


def test_autocorrelation_matches_simulation():
    """Test the closed-form correlation against simulated driver paths."""
    driver = DriverSpec(0.1)
    times = [1.0, 4.0]
    rng = np.random.default_rng(0)
    first = rng.standard_normal(100000) * driver.stdev(0.0, times[0])
    second = first + rng.standard_normal(100000) * driver.stdev(times[0], times[1])
    sample = np.corrcoef(first, second)[0, 1]
    assert sample == pytest.approx(driver.autocorrelation(*times), abs=0.01)


def test_conditional_density():
    """Test that the driver is driftless with the bridging variance."""
    driver = DriverSpec(0.05)
    mean, variance = driver.conditional_density(3.0, 1.0, 0.4)
    assert mean == 0.4
    assert variance == pytest.approx(driver.variance(1.0, 3.0))
    with pytest.raises(ValueError):
        driver.conditional_density(1.0, 3.0, 0.0)


def test_grid_layout():
    """Test that the grid has 2·steps·devs + 1 nodes spanning ±devs standard deviations."""
    driver = DriverSpec(0.0, (0.5, 1.0, 2.0))
    grid = driver.build_grid(10, 10)
    assert grid.size == 201
    assert all(nodes.size == 201 for nodes in grid.nodes)
    assert grid.nodes[2][grid.center()] == 0.0
    assert grid.nodes[2][-1] == pytest.approx(10.0 * np.sqrt(2.0))
    assert grid.spacings[0] == pytest.approx(np.sqrt(0.5) / 10)
    with pytest.raises(ValueError):
        driver.build_grid(0, 10)


def test_reset_times_must_increase():
    """Test that unordered or non-positive reset times are rejected."""
    with pytest.raises(ValueError):
        DriverSpec(0.0, (1.0, 0.5))
    with pytest.raises(ValueError):
        DriverSpec(0.0, (0.0, 1.0))
