"""Daily hedging backtest of a Bermudan with ATM Europeans, spot par swaps and deposits."""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from hedging.metrics import PnLCollector
from hedging.sensitivities import (
    bermudan_sensitivities,
    deposit_maturity,
    hedge_instrument_ratios,
    market_state,
    swap_schedule,
)
from mf.errors import MarketDataError
from mf.mapping import MfLattice
from mf.market_data import ACT360, CoterminalStrip
from mf.pricing import BermudanTrade
from mf.pricing import bermudan_value as value_bermudan

logger = logging.getLogger(__name__)

STRATEGIES = ("unhedged", "delta", "delta_vega")
_PINV_CONDITION = 1e12


@dataclass(frozen=True)
class HedgeTrade:
    """Bermudan with fixed reset dates T_1..T_{N+1} that stay put while the valuation date moves."""

    dates: tuple
    frequency_months: int
    strike: float
    exercise: tuple
    phi: int = 1
    notional: float = 10000.0

    @property
    def bermudan(self):
        return BermudanTrade(self.strike, self.exercise, self.phi, self.notional)


@dataclass
class BacktestOptions:
    mode: str = "smile"
    liquidation: str = "mark_to_market"
    vega_roll: str = "daily"
    mean_reversion: float = 0.0
    steps_per_dev: int = 10
    deviations: int = 7
    order: int = 3
    vega_bump: float = None
    delta_bump_bp: float = 1.0
    instrument_deltas: str = "revalued"
    calibration: dict = None

    def __post_init__(self):
        if self.liquidation not in ("mark_to_market", "mark_to_model"):
            raise ValueError(f"Unknown liquidation basis: {self.liquidation}")
        if self.vega_roll not in ("daily", "monthly"):
            raise ValueError(f"Unknown vega roll: {self.vega_roll}")
        if self.instrument_deltas not in ("revalued", "analytic"):
            raise ValueError(f"Unknown instrument delta method: {self.instrument_deltas}")

    @property
    def grid(self):
        return {"steps_per_dev": self.steps_per_dev, "deviations": self.deviations,
                "order": self.order}

    @property
    def basis(self):
        return "market" if self.liquidation == "mark_to_market" else "model"


@dataclass
class Position:
    """
    One hedge holding.

    kind is 'european' (expiry n, strike), 'swap' (payer paying strike on
    schedule, first fixing set at entry) or 'deposit' (unit zero-coupon bond
    to maturity).
    """

    kind: str
    quantity: float
    strike: float = 0.0
    expiry: int = 0
    schedule: tuple = ()
    entry_first_df: float = 1.0
    maturity: object = None
    phi: int = 1

    def value(self, state, basis="model", curve=None, strip=None):
        """Value of the holding in a market state, optionally on a bumped curve or strip."""
        curve = curve or state.curve
        if self.kind == "european":
            return self.quantity * state.european(self.expiry, self.strike, self.phi, 1.0, basis,
                                                  strip)
        if self.kind == "deposit":
            return self.quantity * curve.discount_factor_at(self.maturity)
        dfs = np.array([curve.discount_factor_at(d) for d in self.schedule[1:]])
        accruals = np.array([(b - a).days / ACT360
                             for a, b in zip(self.schedule[:-1], self.schedule[1:])])
        floating = dfs[0] / self.entry_first_df - dfs[-1]
        return self.quantity * (floating - self.strike * float(np.dot(accruals, dfs)))


@dataclass
class HedgeLedger:
    """Daily ledger: hedged NPV = Bermudan + hedges + bank on every row."""

    strategy: str
    records: list = field(default_factory=list)

    def add(self, **record):
        self.records.append(record)

    def to_frame(self):
        return pd.DataFrame(self.records)


def _check_scenario(scenario, trade):
    if len(scenario) < 2:
        raise MarketDataError("Backtest needs at least two snapshots")
    if any(snap.date >= trade.dates[0] for snap in scenario):
        raise MarketDataError(f"First reset date {trade.dates[0]} must lie after every scenario day")


def _roll_day(scenario, i):
    return i == 0 or scenario[i].date.month != scenario[i - 1].date.month


def _solve(matrix, target, label):
    """Solve matrix·q = target, falling back to the pseudo-inverse on a singular system."""
    if np.linalg.cond(matrix) < _PINV_CONDITION:
        return np.linalg.solve(matrix, target), False
    logger.warning("Singular %s hedge system; using the pseudo-inverse", label)
    return np.linalg.pinv(matrix) @ target, True


def _instrument_positions(state):
    """Unit deposit and par-swap positions in the order of the snapshot's curve inputs."""
    snapshot = state.snapshot
    positions = []
    for tenor, _ in snapshot.deposits:
        positions.append(Position("deposit", 1.0, maturity=deposit_maturity(snapshot.date, tenor)))
    for years, rate in snapshot.swaps:
        schedule = tuple(swap_schedule(snapshot.date, years))
        positions.append(Position("swap", 1.0, strike=rate, schedule=schedule,
                                  entry_first_df=state.curve.discount_factor_at(schedule[1])))
    return positions


def _european_deltas(state, europeans, bumped):
    """Value change of the held Europeans for each curve-input bump."""
    base = sum(p.value(state, "model") for p in europeans)
    return np.array([sum(p.value(state, "model", strip=strip) for p in europeans) - base
                     for _, strip in bumped])


def _instrument_delta_matrix(state, instruments, options, bumped):
    """J[i, j]: value change of unit instrument j when curve input i is bumped."""
    if options.instrument_deltas == "analytic":
        return np.diag(hedge_instrument_ratios(state.snapshot, state.curve, options.delta_bump_bp))
    base = np.array([p.value(state) for p in instruments])
    return np.array([np.array([p.value(state, curve=curve) for p in instruments]) - base
                     for curve, _ in bumped])


def _bumped_markets(state, options):
    out = []
    for i in range(len(state.snapshot.input_labels)):
        snapshot = state.snapshot.bumped(i, options.delta_bump_bp)
        curve = snapshot.curve()
        out.append((curve, CoterminalStrip.from_market(curve, state.strip.tenor, snapshot.surface)))
    return out


def run_backtest(scenario, trade, strategy="delta_vega", options=None):
    """
    Replay a market history and hedge a bought Bermudan every morning.

    Each day: accrue the bank, value the Bermudan and yesterday's hedges,
    liquidate the hedges, then buy ATM Europeans that flatten the Bermudan's
    vegas and spot swaps and deposits that flatten the combined deltas.

    Args:
        scenario: List of MarketSnapshot on consecutive days
        trade: HedgeTrade
        strategy: 'unhedged', 'delta' or 'delta_vega'
        options: BacktestOptions

    Returns:
        (HedgeLedger, stats dict)
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"Unknown strategy: {strategy}")
    options = options or BacktestOptions()
    _check_scenario(scenario, trade)
    bermudan = trade.bermudan
    ledger = HedgeLedger(strategy)
    collector = PnLCollector()

    bank = 0.0
    europeans, linear = [], []
    previous_npv = 0.0
    for i, snapshot in enumerate(scenario):
        state = market_state(snapshot, list(trade.dates), trade.frequency_months, options.mode,
                             calibration=options.calibration)
        bermudan.check(state.strip.tenor.n_periods)

        # 1. Accrue the bank at yesterday's shortest deposit rate
        if i > 0:
            days = (snapshot.date - scenario[i - 1].date).days
            bank *= 1.0 + scenario[i - 1].short_rate * days / ACT360

        # 2. Value the Bermudan; it is bought from the bank on the first day
        roll = options.vega_roll == "daily" or _roll_day(scenario, i)
        need_vegas = strategy == "delta_vega" and roll
        need_deltas = strategy != "unhedged"
        sens = bermudan_sensitivities(
            bermudan, state, options.mean_reversion, options.grid, options.vega_bump,
            options.delta_bump_bp, with_deltas=need_deltas, with_vegas=need_vegas,
        ) if (need_vegas or need_deltas) and i < len(scenario) - 1 else None
        if sens is not None:
            bermudan_value = sens.value
        else:
            lattice = MfLattice(state.strip, state.model, options.mean_reversion, **options.grid)
            bermudan_value = value_bermudan(lattice, bermudan)
        if i == 0:
            bank = -bermudan_value

        # 3. Value yesterday's hedges and record the hedged NPV
        hedges = sum(p.value(state, options.basis) for p in europeans + linear)
        npv = bermudan_value + hedges + bank
        pnl = npv - previous_npv if i > 0 else 0.0
        record = {"date": snapshot.date, "bermudan": bermudan_value, "hedges": hedges,
                  "bank": bank, "npv": npv, "pnl": pnl, "residual_delta": np.nan,
                  "residual_vega": np.nan, "pinv_fallback": False, "vega_skipped": False}
        previous_npv = npv

        # 4. Liquidate; Europeans stay on the book between monthly roll days
        bank += sum(p.value(state, options.basis) for p in linear)
        linear = []
        if roll:
            bank += sum(p.value(state, options.basis) for p in europeans)
            europeans = []

        if sens is not None:
            # 5. Vega hedge with ATM Europeans on the exercise expiries
            if need_vegas:
                for n in bermudan.exercise:
                    strike = float(state.strip.forwards[n - 1])
                    vega = state.european_vega(n, strike, trade.phi)
                    if abs(vega) < 1e-14:
                        logger.warning("Zero European vega at expiry %d on %s", n, snapshot.date)
                        record["vega_skipped"] = True
                        continue
                    position = Position("european", -sens.vegas[n - 1] / vega, strike=strike,
                                        expiry=n, phi=trade.phi)
                    bank -= position.value(state, options.basis)
                    europeans.append(position)
                combined = sens.vegas + _european_vegas(state, europeans)
                record["residual_vega"] = float(np.max(np.abs(
                    combined[[n - 1 for n in bermudan.exercise]])))

            # 6. Delta hedge the combined book with deposits and spot par swaps
            bumped = _bumped_markets(state, options)
            book = sens.deltas + _european_deltas(state, europeans, bumped)
            instruments = _instrument_positions(state)
            matrix = _instrument_delta_matrix(state, instruments, options, bumped)
            quantities, fallback = _solve(matrix, -book, "delta")
            record["pinv_fallback"] = record["pinv_fallback"] or fallback
            for position, quantity in zip(instruments, quantities):
                position.quantity = float(quantity)
                bank -= position.value(state, options.basis)
                linear.append(position)
            record["residual_delta"] = float(np.max(np.abs(book + matrix @ quantities)))

        ledger.add(**record)
        collector.add_record(record)

    stats = collector.compute_metrics()
    logger.info("%s backtest over %d days: P&L stdev %.4f, drift %.4f", strategy,
                stats["days"], stats["pnl_std"], stats["drift"])
    return ledger, stats


def _european_vegas(state, europeans):
    vegas = np.zeros(state.strip.tenor.n_periods)
    for p in europeans:
        vegas[p.expiry - 1] += p.quantity * state.european_vega(p.expiry, p.strike, p.phi)
    return vegas


def run_strategies(scenario, trade, strategies=STRATEGIES, options=None):
    """
    Run several strategies on the same scenario.

    Returns:
        (frame with date plus npv_/pnl_ columns per strategy, {strategy: stats})
    """
    frame, stats = None, {}
    for strategy in strategies:
        ledger, stats[strategy] = run_backtest(scenario, trade, strategy, options)
        part = ledger.to_frame()[["date", "npv", "pnl"]].rename(
            columns={"npv": f"npv_{strategy}", "pnl": f"pnl_{strategy}"})
        frame = part if frame is None else frame.merge(part, on="date")
    return frame, stats
