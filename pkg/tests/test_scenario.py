"""Tests for market snapshots, synthetic scenarios and hedge-instrument ratios."""

import datetime as dt

import numpy as np
import pytest

from hedging.metrics import PnLCollector
from hedging.scenario import (
    build_synthetic_smiles,
    frozen_scenario,
    generate_synthetic_scenario,
    load_scenario,
    reversed_scenario,
    save_scenario,
)
from hedging.sensitivities import deposit_ratio, hedge_instrument_ratios, market_state
from mf.errors import MarketDataError
from mf.market_data import build_schedule

CONFIG = {
    'start_date': '2004-05-28',
    'days': 8,
    'level': 0.025,
    'slope': 0.025,
    'rate_vol_bp': 5.0,
    'vol_level': 0.18,
    'vol_of_vol': 0.01,
    'rate_vol_corr': -0.3,
    'omega_range': (1.5, 3.0),
    'm_range': (0.0, 0.05),
    'lam': 0.75,
    'rate_floor': 0.001,
    'seed': 5,
}


@pytest.fixture(scope="module")
def scenario():
    return generate_synthetic_scenario(CONFIG, 4)


def test_scenario_is_seeded(scenario):
    """Test that the same seed gives the same market history."""
    again = generate_synthetic_scenario(CONFIG, 4)
    assert [s.swaps for s in again] == [s.swaps for s in scenario]
    other = generate_synthetic_scenario(CONFIG, 4, seed=6)
    assert other[-1].swaps != scenario[-1].swaps


def test_scenario_calendar_and_floor(scenario):
    """Test consecutive business days and rates above the floor."""
    assert len(scenario) == 8
    assert scenario[0].date == dt.date(2004, 5, 28)
    assert all(s.date.weekday() < 5 for s in scenario)
    assert all(b.date > a.date for a, b in zip(scenario[:-1], scenario[1:]))
    assert min(r for s in scenario for _, r in s.deposits + s.swaps) > 0.001
    assert all(len(s.omegas) == 4 for s in scenario)


def test_snapshot_bump_and_labels(scenario):
    """Test that curve inputs are labelled and bumped deposits first."""
    snapshot = scenario[0]
    assert snapshot.input_labels[:2] == ("2D", "1W")
    assert snapshot.input_labels[-1] == "15Y"
    bumped = snapshot.bumped(0, 1.0)
    assert bumped.deposits[0][1] == pytest.approx(snapshot.deposits[0][1] + 1e-4)
    swap_bumped = snapshot.bumped(len(snapshot.deposits), 1.0)
    assert swap_bumped.swaps[0][1] == pytest.approx(snapshot.swaps[0][1] + 1e-4)
    assert swap_bumped.deposits == snapshot.deposits


def test_smile_interpolation_between_nodes():
    """Test that smile parameters move linearly in calendar time between nodes."""
    nodes = [dt.date(2004, 6, 1), dt.date(2004, 6, 11)]
    days = [dt.date(2004, 5, 28), dt.date(2004, 6, 6), dt.date(2004, 6, 30)]
    omegas, ms = build_synthetic_smiles(nodes, [[1.0], [3.0]], [[0.0], [0.05]], days)
    assert omegas[:, 0].tolist() == pytest.approx([1.0, 2.0, 3.0])
    assert ms[1, 0] == pytest.approx(0.025)
    with pytest.raises(MarketDataError):
        build_synthetic_smiles(nodes[::-1], [[1.0], [3.0]], [[0.0], [0.05]], days)


def test_frozen_and_reversed_scenarios(scenario):
    """Test the frozen and time-reversed market histories."""
    frozen = frozen_scenario(scenario[0], 5)
    assert len({s.date for s in frozen}) == 5
    assert all(s.swaps == scenario[0].swaps for s in frozen)
    backwards = reversed_scenario(scenario)
    assert backwards[0].date == scenario[0].date
    assert backwards[0].swaps == scenario[-1].swaps


def test_scenario_file(scenario, tmp_path):
    """Test that a saved scenario reloads with the same market."""
    path = tmp_path / "scenario.csv"
    save_scenario(scenario, path)
    loaded = load_scenario(path)
    assert [s.date for s in loaded] == [s.date for s in scenario]
    assert loaded[3].swaps == scenario[3].swaps
    assert loaded[3].deposits == scenario[3].deposits
    assert np.allclose(loaded[3].surface.vols, scenario[3].surface.vols, rtol=0, atol=1e-15)
    assert loaded[3].omegas == pytest.approx(scenario[3].omegas)


def test_deposit_ratio():
    """Test ∂D/∂r of a deposit discount factor."""
    assert deposit_ratio(0.02, 0.5) == pytest.approx(-0.5 / 1.01 ** 2)
    assert deposit_ratio(0.02, 0.5) == pytest.approx(-0.49014802, abs=1e-8)


def test_instrument_ratios(scenario):
    """Test that deposit ratios are negative and swap ratios are the PVBP per bp."""
    snapshot = scenario[0]
    ratios = hedge_instrument_ratios(snapshot)
    n_deposits = len(snapshot.deposits)
    assert ratios.size == len(snapshot.input_labels)
    assert np.all(ratios[:n_deposits] < 0)
    assert ratios[n_deposits] == pytest.approx(1e-4 * 366 / 360 / (1 + snapshot.swaps[0][1]
                                                                      * 366 / 360), rel=1e-2)
    assert np.all(np.diff(ratios[n_deposits:]) > 0)


def test_market_state_matches_atm(scenario):
    """Test that the snapshot's market smile prices ATM like Black in both modes."""
    dates = build_schedule(scenario[0].date, dt.date(2005, 5, 31), 4, 12).dates
    smile = market_state(scenario[0], dates, 12, "smile")
    flat = market_state(scenario[0], dates, 12, "nonsmile")
    for n in range(1, 5):
        forward = float(smile.strip.forwards[n - 1])
        assert smile.european(n, forward) == pytest.approx(flat.european(n, forward), rel=1e-10)
        assert smile.european(n, forward, basis="market") == pytest.approx(
            smile.european(n, forward), rel=1e-12)
    with pytest.raises(ValueError):
        market_state(scenario[0], dates, 12, "sabr")


def test_refitted_hedging_model(scenario):
    """Test that a three-quote refit of the market smile reprices its quotes."""
    dates = build_schedule(scenario[0].date, dt.date(2005, 5, 31), 4, 12).dates
    state = market_state(scenario[0], dates, 12, "smile",
                         calibration={'offsets_bp': (-100, 0, 100), 'lam': 0.75})
    assert state.model.params != state.market_params
    for n in range(1, 5):
        forward = float(state.strip.forwards[n - 1])
        for strike in (forward - 0.01, forward, forward + 0.01):
            assert state.european(n, strike) == pytest.approx(
                state.european(n, strike, basis="market"), rel=1e-3)
    bounded = market_state(scenario[0], dates, 12, "smile",
                           calibration={'offsets_bp': (-100, 0, 100), 'm_bound': 0.05})
    assert all(0.0 < p.m <= 0.05 for p in bounded.model.params)


def test_pnl_statistics():
    """Test the P&L statistics of a short ledger."""
    collector = PnLCollector()
    assert collector.compute_metrics()['days'] == 0
    for npv, pnl in ((0.0, 0.0), (1.0, 1.0), (-1.0, -2.0), (2.0, 3.0)):
        collector.add_record({'npv': npv, 'pnl': pnl, 'vega_skipped': npv < 0})
    metrics = collector.compute_metrics()
    assert metrics['days'] == 4
    assert metrics['pnl_std'] == pytest.approx(np.std([1.0, -2.0, 3.0], ddof=1))
    assert metrics['drift'] == 2.0
    assert metrics['max_drawdown'] == 2.0
    assert metrics['pinv_fallbacks'] == 0
    assert metrics['vega_skips'] == 1
