"""Model state per snapshot, bump-and-revalue Bermudan sensitivities and hedge ratios."""

import logging
from dataclasses import dataclass

import numpy as np
from dateutil.relativedelta import relativedelta

from mf.analytic import UVDDParams, black_atm_vega, uvdd_european, uvdd_vega_sigma1
from mf.calibration import (
    QUOTE_OFFSETS_BP,
    adjust_sigma_to_atm,
    calibrate_expiry,
    synthetic_quotes,
)
from mf.mapping import MappingModel, MfLattice, european_spec
from mf.market_data import ACT360, CoterminalStrip, TenorStructure, add_tenor, adjust_date
from mf.pricing import bermudan_value

logger = logging.getLogger(__name__)

VEGA_BUMPS = {"smile": 1e-4, "nonsmile": 1e-3}


@dataclass
class MarketState:
    """Curve, strip, market smile and hedging model derived from one snapshot."""

    snapshot: object
    curve: object
    strip: CoterminalStrip
    market_params: list
    model: MappingModel
    mode: str

    def european(self, n, strike, phi=1, notional=1.0, basis="model", strip=None):
        """European on the co-terminal swap from T_n at the model or the market smile."""
        spec = european_spec(strip or self.strip, n, strike, phi, notional)
        if basis == "market":
            return uvdd_european(spec, self.market_params[n - 1])
        return self.model.european(n, spec)

    def european_vega(self, n, strike, phi=1, notional=1.0):
        """ATM ∂E/∂σ¹_n in smile mode, ∂E/∂σ̄_n in non-smile mode."""
        spec = european_spec(self.strip, n, strike, phi, notional)
        if self.mode == "smile":
            return uvdd_vega_sigma1(spec, self.model.params[n - 1])
        return black_atm_vega(spec, self.model.vols[n - 1])


def market_smile(snapshot, strip):
    """UVDD market parameters per expiry with σ¹ matching the snapshot's ATM vols."""
    params = []
    for n, vol in enumerate(strip.atm_vols, start=1):
        spec = european_spec(strip, n, float(strip.forwards[n - 1]))
        template = UVDDParams.from_omega(vol, snapshot.omegas[n - 1], snapshot.displacements[n - 1],
                                         snapshot.lam)
        params.append(adjust_sigma_to_atm(spec, vol, template))
    return params


def calibrated_smile(strip, market_params, calibration):
    """
    Hedging-model UVDD parameters fitted to market quotes at a few strikes.

    Args:
        strip: CoterminalStrip of the snapshot
        market_params: Market UVDDParams per expiry, used to quote the smile
        calibration: Dict with optional offsets_bp, lam and m_bound; a
            m_bound selects the bounded-displacement fit

    Returns:
        List of calibrated UVDDParams
    """
    offsets = calibration.get("offsets_bp", QUOTE_OFFSETS_BP)
    lam = calibration.get("lam", 0.75)
    m_bound = calibration.get("m_bound")
    case = 4 if m_bound is None else 6
    fitted = []
    for n, params in enumerate(market_params, start=1):
        spec = european_spec(strip, n, float(strip.forwards[n - 1]))
        problem = synthetic_quotes(spec.forward, spec.expiry, spec.annuity, params, offsets)
        fitted.append(calibrate_expiry(problem, case, lam, m_bound or 0.10).params)
    return fitted


def market_state(snapshot, dates, frequency_months, mode="smile", curve=None, calibration=None):
    """
    Build the valuation state of a snapshot for a trade's reset dates.

    In smile mode the hedging model is the market UVDD smile itself, or a
    UVDD refitted to it when calibration settings are given; in non-smile
    mode it is a Black mapping at the ATM vols.
    """
    if mode not in VEGA_BUMPS:
        raise ValueError(f"Unknown model mode: {mode}")
    curve = curve or snapshot.curve()
    tenor = TenorStructure(snapshot.date, dates, frequency_months)
    strip = CoterminalStrip.from_market(curve, tenor, snapshot.surface)
    params = market_smile(snapshot, strip)
    if mode == "nonsmile":
        model = MappingModel.black(strip.atm_vols)
    elif calibration:
        model = MappingModel.uvdd(calibrated_smile(strip, params, calibration))
    else:
        model = MappingModel.uvdd(params)
    return MarketState(snapshot, curve, strip, params, model, mode)


def bumped_strip(state, index, bp=1.0):
    """Strip after bumping one curve input and re-bootstrapping."""
    snapshot = state.snapshot.bumped(index, bp)
    curve = snapshot.curve()
    return CoterminalStrip.from_market(curve, state.strip.tenor, snapshot.surface)


@dataclass
class SensitivityVector:
    """Bermudan vegas per expiry (per unit vol) and deltas per curve input (per bump)."""

    value: float
    vegas: np.ndarray
    deltas: np.ndarray
    labels: tuple


def bermudan_sensitivities(trade, state, mean_reversion=0.0, grid=None, vega_bump=None,
                           delta_bump_bp=1.0, with_deltas=True, with_vegas=True):
    """
    Bump-and-revalue sensitivities of a Bermudan.

    Vegas bump σ¹_n (smile) or σ̄_n (non-smile) of each exercise expiry and
    rebuild the mapping. Deltas bump each deposit and par-swap input,
    re-bootstrap and rebuild with model parameters held fixed.
    """
    grid = grid or {}
    bump = vega_bump or VEGA_BUMPS[state.mode]
    base = bermudan_value(MfLattice(state.strip, state.model, mean_reversion, **grid), trade)

    vegas = np.zeros(state.strip.tenor.n_periods)
    for n in (trade.exercise if with_vegas else ()):
        lattice = MfLattice(state.strip, state.model.bumped(n, bump), mean_reversion, **grid)
        vegas[n - 1] = (bermudan_value(lattice, trade) - base) / bump

    labels = state.snapshot.input_labels
    deltas = np.zeros(len(labels))
    if with_deltas:
        for i in range(len(labels)):
            strip = bumped_strip(state, i, delta_bump_bp)
            deltas[i] = bermudan_value(MfLattice(strip, state.model, mean_reversion, **grid),
                                       trade) - base
    return SensitivityVector(base, vegas, deltas, labels)


def deposit_maturity(spot, tenor, roll="modified_following"):
    return add_tenor(spot, tenor, roll)


def swap_schedule(spot, years, roll="modified_following"):
    return [adjust_date(spot + relativedelta(years=k), roll) for k in range(years + 1)]


def swap_annuity(curve, dates):
    accruals = np.array([(b - a).days / ACT360 for a, b in zip(dates[:-1], dates[1:])])
    dfs = np.array([curve.discount_factor_at(d) for d in dates[1:]])
    return float(np.dot(accruals, dfs))


def deposit_ratio(rate, accrual):
    """∂D/∂r of a deposit discount factor 1 / (1 + r·δt)."""
    return -accrual / (1.0 + rate * accrual) ** 2


def hedge_instrument_ratios(snapshot, curve=None, bump_bp=1.0):
    """
    Value change of each delta instrument for a bump of its own quote.

    Deposits are unit zero-coupon bonds to the deposit maturity with
    ∂D/∂r = −δt/(1 + rδt)²; par swaps are payers with ∂V/∂S = PVBP.

    Returns:
        Array ordered like snapshot.input_labels
    """
    curve = curve or snapshot.curve()
    scale = bump_bp * 1e-4
    ratios = []
    for tenor, rate in snapshot.deposits:
        accrual = (deposit_maturity(snapshot.date, tenor) - snapshot.date).days / ACT360
        ratios.append(deposit_ratio(rate, accrual) * scale)
    for years, _ in snapshot.swaps:
        ratios.append(swap_annuity(curve, swap_schedule(snapshot.date, years)) * scale)
    return np.array(ratios)
