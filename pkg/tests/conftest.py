"""Shared fixtures: Data Set I market, the Trade I strip and its mapped lattices."""

import datetime as dt
from pathlib import Path

import pytest

from experiments.pricing_cases import get_scenario_config
from mf.calibration import case_model
from mf.mapping import MfLattice
from mf.market_data import CoterminalStrip, build_schedule, load_atm_surface, load_curve

DATA_DIR = Path(__file__).resolve().parent.parent / "data" / "dataset1"
VALUATION = dt.date(2002, 7, 9)
CASES = get_scenario_config()["cases"]


@pytest.fixture(scope="session")
def curve():
    return load_curve(DATA_DIR / "curve.csv", VALUATION, "zero_rate")


@pytest.fixture(scope="session")
def surface():
    return load_atm_surface(DATA_DIR / "atm_surface.csv", "flat")


@pytest.fixture(scope="session")
def tenor():
    return build_schedule(VALUATION, dt.date(2002, 7, 12), 10, 6)


@pytest.fixture(scope="session")
def strip(curve, tenor, surface):
    return CoterminalStrip.from_market(curve, tenor, surface)


@pytest.fixture(scope="session")
def case_models(strip):
    return {case: case_model(spec, strip) for case, spec in CASES.items()}


@pytest.fixture(scope="session")
def lattices(strip, case_models):
    """Lattices at zero mean reversion on the (10, 10, order 3) grid."""
    return {case: MfLattice(strip, model) for case, model in case_models.items()}
