"""Tests for lattice valuation, future smiles and smile dynamics."""

import numpy as np
import pytest

from mf.analytic import implied_black_vol
from mf.errors import MarketDataError
from mf.mapping import MfLattice, european_spec
from mf.pricing import (
    BermudanTrade,
    average_future_atm_vol,
    bermudan_strike_sweep,
    bermudan_value,
    convergence_table,
    european_table,
    european_value,
    exercise_payoff,
    future_smile,
    smile_dynamics_scenario,
    swap_value_lattice,
    underlying_swap_value,
)

EXERCISE = tuple(range(5, 11))

# Bermudan values in bp, exercise T_5..T_10, zero mean reversion
BERMUDAN_TABLE = {
    1: (541.00, 228.45, 90.11),
    2: (548.63, 228.45, 82.32),
    3: (552.71, 228.48, 78.23),
    5: (545.76, 226.27, 95.52),
    6: (567.78, 223.78, 126.56),
    7: (553.17, 226.54, 88.30),
    8: (560.57, 223.97, 99.17),
}

SWEEP_STRIKES = [0.03 + 0.005 * k for k in range(12)]
SWEEP_TABLE = {
    "bermudan_bs_mr0": [652.52, 541.00, 442.23, 357.49, 286.60, 228.45,
                        181.41, 143.75, 113.81, 90.11, 71.40, 56.65],
    "bermudan_bs_mr0.1": [656.70, 547.48, 450.62, 367.07, 296.63, 238.30,
                          190.64, 152.11, 121.18, 96.49, 76.83, 61.23],
    "bermudan_uvdd_mr0": [675.22, 560.57, 455.04, 362.39, 285.15, 223.97,
                          177.84, 143.48, 118.04, 99.17, 84.85, 73.67],
    "bermudan_uvdd_mr0.1": [679.24, 565.75, 461.58, 370.09, 293.51, 232.50,
                            186.11, 151.38, 125.55, 106.23, 91.43, 79.80],
    "european_bs": [645.22, 526.08, 418.22, 324.74, 246.96, 184.52,
                    135.85, 98.84, 71.23, 50.95, 36.24, 25.67],
    "european_uvdd": [663.95, 546.10, 435.07, 335.24, 250.87, 184.29,
                      135.00, 100.33, 76.63, 60.49, 49.23, 41.02],
}


@pytest.mark.parametrize("case", range(1, 9))
def test_lattice_europeans_match_analytic(case, lattices):
    """Test that lattice Europeans reproduce the analytic model within 0.05bp."""
    table = european_table(lattices[case], 0.05)
    assert table["diff"].abs().max() < 0.05, table


def test_swap_recursion_matches_closed_form(lattices):
    """Test that the rebased coupon recursion reproduces R_n(S_n − K) near the centre."""
    lattice = lattices[8]
    recursion = swap_value_lattice(lattice, 0.05)
    for n in (3, 7, 10):
        central = np.abs(lattice.date(n).x) <= 3.0 * lattice.grid.stdevs[n - 1]
        closed = exercise_payoff(lattice, n, 0.05)
        assert recursion[n][central] == pytest.approx(closed[central], abs=1e-7)


def test_single_exercise_bermudan_is_european(lattices):
    """Test that a one-date Bermudan prices like the European."""
    lattice = lattices[5]
    trade = BermudanTrade(0.05, EXERCISE)
    assert bermudan_value(lattice, trade.european(7)) == pytest.approx(
        european_value(lattice, 7, 0.05), rel=5e-4)


def test_bermudan_dominates_europeans(lattices):
    """Test that the Bermudan is worth at least its most valuable European."""
    lattice = lattices[8]
    trade = BermudanTrade(0.055, EXERCISE)
    value = bermudan_value(lattice, trade)
    assert value >= max(european_value(lattice, n, 0.055) for n in EXERCISE)


def test_trade_validation(lattices):
    """Test the Bermudan contract checks."""
    with pytest.raises(ValueError):
        BermudanTrade(0.05, ())
    with pytest.raises(ValueError):
        BermudanTrade(0.05, (0, 3))
    with pytest.raises(MarketDataError):
        bermudan_value(lattices[1], BermudanTrade(0.05, (5, 11)))


def test_underlying_swap_value(strip):
    """Test the forward swap value column of the strike sweep."""
    assert underlying_swap_value(strip, 5, 0.03) == pytest.approx(639.98, abs=0.05)
    step = underlying_swap_value(strip, 5, 0.035) - underlying_swap_value(strip, 5, 0.03)
    assert step == pytest.approx(-130.35, abs=0.05)


@pytest.mark.slow
@pytest.mark.parametrize("case", sorted(BERMUDAN_TABLE))
def test_bermudan_table(case, lattices):
    """Test Trade I Bermudans against reference values at three strikes."""
    for strike, expected in zip((0.035, 0.055, 0.075), BERMUDAN_TABLE[case]):
        value = bermudan_value(lattices[case], BermudanTrade(strike, EXERCISE))
        assert value == pytest.approx(expected, abs=0.5), f"case {case}, K={strike}"


@pytest.mark.slow
def test_strike_sweep(strip, case_models):
    """Test the strike sweep values and that mean reversion raises every Bermudan."""
    models = {"bs": case_models[1], "uvdd": case_models[8]}
    frame = bermudan_strike_sweep(strip, models, BermudanTrade(0.05, EXERCISE), SWEEP_STRIKES,
                                  [0.0, 0.1])
    for column, expected in SWEEP_TABLE.items():
        tolerance = 0.1 if column.startswith("european") else 0.5
        assert frame[column].to_numpy() == pytest.approx(expected, abs=tolerance), column
    for label in models:
        assert np.all(frame[f"bermudan_{label}_mr0.1"] >= frame[f"bermudan_{label}_mr0"])


def test_convergence_table(strip, case_models):
    """Test that moderate grids already price the T_7 European within 0.1%."""
    table = convergence_table(strip, case_models[8], 0.05, [5, 10], [4, 10], expiries=[7])
    assert (table.to_numpy() < 1e-3).all()
    assert table.loc[10, 10] <= table.loc[10, 5]


def test_future_smile_today_is_todays_smile(lattices):
    """Test that conditioning on today's state reproduces the model smile."""
    lattice = lattices[8]
    forward = float(lattice.strip.forwards[4])
    strikes = [forward - 0.01, forward, forward + 0.01]
    smile = future_smile(lattice, 5, 0, 0.0, strikes)
    assert smile.forward == pytest.approx(forward, rel=1e-6)
    for strike, vol in zip(strikes, smile.vols):
        spec = european_spec(lattice.strip, 5, strike)
        expected = implied_black_vol(spec, lattice.model.european(5, spec))
        assert vol == pytest.approx(expected, abs=1e-4)
    assert list(smile.to_frame().columns) == ["strike", "price", "implied_vol"]


def test_black_future_smile_is_not_flat(lattices):
    """Test that a lognormal mapping still produces a curved future smile."""
    lattice = lattices[1]
    at_forward = future_smile(lattice, 7, 3, 0.0, [])
    strikes = at_forward.forward + np.array([-0.015, -0.0075, 0.0, 0.0075, 0.015])
    vols = future_smile(lattice, 7, 3, 0.0, strikes).vols
    assert np.all(np.isfinite(vols))
    assert vols.max() - vols.min() > 1e-4


def test_future_smile_needs_grid_state(lattices):
    """Test that conditioning states must be grid nodes."""
    with pytest.raises(ValueError):
        future_smile(lattices[1], 7, 3, 0.0123456, [0.05])
    with pytest.raises(ValueError):
        future_smile(lattices[1], 3, 7, 0.0, [0.05])


@pytest.mark.slow
def test_mean_reversion_lifts_future_atm_vols(strip, case_models):
    """Test that the average future ATM vol rises with mean reversion."""
    levels = [average_future_atm_vol(MfLattice(strip, case_models[8], a), 9, 6)
              for a in (0.0, 0.1, 0.3)]
    assert levels[0] < levels[1] < levels[2]


def test_discount_bump_moves_forward(strip):
    """Test the D_5 bump experiment forwards with the annuity unchanged."""
    up = strip.bump_discount(5, 0.01)
    down = strip.bump_discount(5, -0.01)
    assert up.forwards[4] == pytest.approx(0.0584, abs=1e-4)
    assert down.forwards[4] == pytest.approx(0.0507, abs=1e-4)
    assert up.annuities[4] == pytest.approx(strip.annuities[4], rel=1e-15)


def test_uncertain_volatility_is_sticky_delta(strip, case_models):
    """Test that a zero-displacement mixture smile rides with moneyness."""
    params = case_models[6].params[4]
    forward = float(strip.forwards[4])
    strikes = forward + np.array([-0.02, -0.01, 0.0, 0.01, 0.02])
    frame = smile_dynamics_scenario(strip, strip.bump_discount(5, 0.01), params, 5, strikes)
    fixed_strike = (frame["bumped_vol"] - frame["base_vol"]).abs().max()
    fixed_moneyness = (frame["bumped_vol_same_moneyness"] - frame["base_vol"]).abs().max()
    assert fixed_moneyness <= 0.1 * fixed_strike
    assert frame.attrs["bumped_forward"] > frame.attrs["base_forward"]


def test_zero_bump_leaves_smile_unchanged(strip, case_models):
    """Test that an unmoved market reproduces the base smile at every strike."""
    params = case_models[8].params[4]
    forward = float(strip.forwards[4])
    strikes = forward + np.array([-0.01, 0.0, 0.01])
    for unmoved in (strip, strip.bump_discount(5, 0.0)):
        frame = smile_dynamics_scenario(strip, unmoved, params, 5, strikes)
        assert frame["bumped_vol"].to_numpy() == pytest.approx(frame["base_vol"].to_numpy(),
                                                              abs=1e-10)
        assert frame["bumped_vol_same_moneyness"].to_numpy() == pytest.approx(
            frame["base_vol"].to_numpy(), abs=1e-10)
        base_forward = frame.attrs["base_forward"]
        assert frame.attrs["bumped_forward"] == pytest.approx(base_forward, rel=1e-14)
