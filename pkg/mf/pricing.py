"""Swap, European and Bermudan valuation on a mapped lattice; future smiles and smile dynamics."""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from mf.analytic import SwaptionSpec, implied_black_vol, uvdd_european
from mf.errors import MarketDataError, NoSolutionError
from mf.mapping import MfLattice, european_spec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BermudanTrade:
    """Co-terminal Bermudan on the lattice's swap; exercise dates are 1-based reset indices."""

    strike: float
    exercise: tuple
    phi: int = 1
    notional: float = 10000.0

    def __post_init__(self):
        exercise = tuple(sorted(set(int(n) for n in self.exercise)))
        object.__setattr__(self, "exercise", exercise)
        if self.strike <= 0:
            raise ValueError("strike must be positive")
        if not exercise:
            raise ValueError("Bermudan needs at least one exercise date")
        if exercise[0] < 1:
            raise ValueError("Exercise indices are 1-based")
        if self.phi not in (1, -1):
            raise ValueError("phi must be +1 (payer) or -1 (receiver)")

    def check(self, n_periods):
        if self.exercise[-1] > n_periods:
            raise MarketDataError(
                f"Exercise date {self.exercise[-1]} beyond last reset date {n_periods}"
            )

    def with_strike(self, strike):
        return BermudanTrade(strike, self.exercise, self.phi, self.notional)

    def european(self, n):
        """Single-exercise trade at date n."""
        return BermudanTrade(self.strike, (n,), self.phi, self.notional)


@dataclass
class ValueLattice:
    """Numeraire-rebased value layers V(x)/D_{N+1}(x) per reset date."""

    swap: dict = field(default_factory=dict)
    option: dict = field(default_factory=dict)
    exercise: dict = field(default_factory=dict)
    value: float = 0.0


def backward_induction(last, roll, exercise_value, exercisable, terminal_hold):
    """
    Generic optimal-stopping roll-back from date last to date 0.

    Args:
        last: Final date index
        roll: roll(n, exercise, hold) -> continuation on date n−1 of the date-n
            payoff max(exercise, hold), or of hold alone when exercise is None
        exercise_value: exercise_value(n) -> exercise payoff on date n
        exercisable: exercisable(n) -> bool
        terminal_hold: Continuation value on date last

    Returns:
        (date-0 continuation array, {n: option layer}, {n: exercise mask})
    """
    layers, masks = {}, {}
    hold = terminal_hold
    for n in range(last, 0, -1):
        if exercisable(n):
            exercise = exercise_value(n)
            # ties resolve to continuation
            masks[n] = exercise > hold
            layers[n] = np.where(masks[n], exercise, hold)
            hold = roll(n, exercise, hold)
        else:
            layers[n] = hold
            hold = roll(n, None, hold)
    return hold, layers, masks


def _lattice_roll(lattice):
    def roll(n, exercise, hold):
        step = lattice.transition(n, n - 1)
        if exercise is None:
            return step.expect(hold)
        return step.expect_max(exercise, hold)
    return roll


def exercise_payoff(lattice, n, strike, phi=1):
    """Rebased swap value φR_n(x)(S_n(x) − K) at date n."""
    date = lattice.date(n)
    return phi * date.numeraire_ratio * (date.swap_rate - strike)


def swap_value_lattice(lattice, strike, phi=1):
    """
    Rebased value U_n of the swap starting at T_n, built by the coupon recursion

        U_n = φ[1/D(x) − (1 + α_n K)·E[1/D(X_{n+1}) | x]] + E[U_{n+1} | x].

    Returns:
        {n: U_n on the date-n grid}
    """
    layers = {}
    following = None
    for n in range(lattice.n_periods, 0, -1):
        date = lattice.date(n)
        coupon = phi * (date.inverse_numeraire
                        - (1.0 + lattice.tenor.accruals[n - 1] * strike) * date.next_bond_ratio)
        if following is None:
            layers[n] = coupon
        else:
            layers[n] = coupon + lattice.transition(n + 1, n).expect(following)
        following = layers[n]
    return layers


def value_lattice(lattice, trade):
    """Full roll-back of a Bermudan with its swap and option layers."""
    trade.check(lattice.n_periods)
    exercise = set(trade.exercise)
    last = trade.exercise[-1]
    hold, layers, masks = backward_induction(
        last,
        _lattice_roll(lattice),
        lambda n: exercise_payoff(lattice, n, trade.strike, trade.phi),
        lambda n: n in exercise,
        np.zeros(lattice.grid.size),
    )
    value = lattice.numeraire_today * float(hold[0]) * trade.notional
    swaps = {n: exercise_payoff(lattice, n, trade.strike, trade.phi) for n in trade.exercise}
    return ValueLattice(swaps, layers, masks, value)


def bermudan_value(lattice, trade):
    """Bermudan value today in currency."""
    return value_lattice(lattice, trade).value


def european_value(lattice, n, strike, phi=1, notional=10000.0):
    """European on the swap from T_n to T_{N+1}, priced with the kink split at the exercise boundary."""
    if not 1 <= n <= lattice.n_periods:
        raise ValueError(f"Expiry index {n} outside 1..{lattice.n_periods}")
    payoff = exercise_payoff(lattice, n, strike, phi)
    rebased = lattice.transition(n, 0).expect_max(payoff, np.zeros_like(payoff))
    return lattice.numeraire_today * float(rebased[0]) * notional


def european_table(lattice, strike, phi=1, notional=10000.0):
    """Lattice against analytic Europeans for every expiry."""
    rows = []
    for n in range(1, lattice.n_periods + 1):
        spec = european_spec(lattice.strip, n, strike, phi, notional)
        analytic = lattice.model.european(n, spec)
        mapped = european_value(lattice, n, strike, phi, notional)
        rows.append({"expiry": n, "analytic": analytic, "mf": mapped, "diff": mapped - analytic})
    return pd.DataFrame(rows)


def underlying_swap_value(strip, n, strike, phi=1, notional=10000.0):
    """Today's value of the forward swap from T_n, φ·P_n(0)·(S_n(0) − K)·notional."""
    return phi * strip.annuities[n - 1] * (strip.forwards[n - 1] - strike) * notional


@dataclass
class FutureSmile:
    """Conditional smile seen from (T_f, x_f) for one expiry."""

    expiry: int
    future_date: int
    state: float
    forward: float
    annuity: float
    time_to_expiry: float
    strikes: np.ndarray
    prices: np.ndarray
    vols: np.ndarray

    def to_frame(self):
        return pd.DataFrame({"strike": self.strikes, "price": self.prices,
                             "implied_vol": self.vols})


def _conditioning(lattice, f, x_f):
    if f == 0:
        if x_f != 0.0:
            raise ValueError("Today's only state is x = 0")
        return 0.0, lattice.numeraire_today
    nodes = lattice.grid.nodes[f - 1]
    index = np.flatnonzero(np.isclose(nodes, x_f, rtol=0.0, atol=1e-12 * max(1.0, abs(x_f))))
    if index.size != 1:
        raise ValueError(f"State {x_f} is not a node of date {f}")
    return lattice.times[f - 1], float(lattice.date(f).numeraire_df[index[0]])


def future_smile(lattice, n, f, x_f, strikes, phi=1):
    """
    Smile of the expiry-n European conditional on X(T_f) = x_f.

    Bonds at (T_f, x_f) are reconstructed from the terminal-bond functional
    forms; prices that no Black vol reproduces are returned as NaN.
    """
    if not 0 <= f < n <= lattice.n_periods:
        raise ValueError(f"Need 0 <= f < n <= N, got f={f}, n={n}")
    t_f, terminal = _conditioning(lattice, f, x_f)
    step = lattice.conditional_transition(n, t_f, [x_f])
    date = lattice.date(n)
    annuity = terminal * float(step.expect(date.numeraire_ratio)[0])
    bond = terminal * float(step.expect(date.inverse_numeraire)[0])
    forward = (bond - terminal) / annuity
    time_to_expiry = lattice.times[n - 1] - t_f

    strikes = np.asarray(strikes, dtype=float)
    prices = np.empty_like(strikes)
    vols = np.empty_like(strikes)
    for i, strike in enumerate(strikes):
        payoff = exercise_payoff(lattice, n, strike, phi)
        prices[i] = terminal * float(step.expect_max(payoff, np.zeros_like(payoff))[0])
        spec = SwaptionSpec(time_to_expiry, forward, annuity, strike, phi)
        try:
            vols[i] = implied_black_vol(spec, prices[i])
        except (NoSolutionError, ValueError):
            logger.warning("No implied vol at strike %.4f (expiry %d from date %d)", strike, n, f)
            vols[i] = np.nan
    return FutureSmile(n, f, float(x_f), forward, annuity, time_to_expiry, strikes, prices, vols)


def future_atm_vols(lattice, n, f, band=1.0):
    """
    Future ATM vols of expiry n seen from the date-f nodes with |x| <= band·σ_{X_f}.

    Returns:
        DataFrame with state, weight (normal density of the state), forward and atm_vol
    """
    nodes = lattice.grid.nodes[f - 1]
    stdev = lattice.grid.stdevs[f - 1]
    rows = []
    for x_f in nodes[np.abs(nodes) <= band * stdev + 1e-12]:
        at_forward = future_smile(lattice, n, f, float(x_f), [])
        smile = future_smile(lattice, n, f, float(x_f), [at_forward.forward])
        rows.append({"state": float(x_f), "weight": float(np.exp(-0.5 * (x_f / stdev) ** 2)),
                     "forward": smile.forward, "atm_vol": float(smile.vols[0])})
    return pd.DataFrame(rows)


def average_future_atm_vol(lattice, n, f, band=1.0):
    """Density-weighted mean of future ATM vols over the central band."""
    frame = future_atm_vols(lattice, n, f, band).dropna()
    return float(np.average(frame["atm_vol"], weights=frame["weight"]))


def future_atm_term_structure(lattice, f, band=1.0):
    """Average future ATM vol for every expiry after date f."""
    return pd.DataFrame([{"expiry": n, "average_atm_vol": average_future_atm_vol(lattice, n, f, band)}
                         for n in range(f + 1, lattice.n_periods + 1)])


def smile_dynamics_scenario(base_strip, bumped_strip, params, n, strikes, phi=1):
    """
    Implied smiles of expiry n before and after a market move, model parameters frozen.

    Args:
        base_strip: Un-bumped CoterminalStrip
        bumped_strip: Strip after the curve bump
        params: UVDDParams calibrated to the base market
        n: Expiry index (1-based)
        strikes: Absolute strikes of the base smile

    Returns:
        DataFrame with base_vol and bumped_vol at each fixed strike, plus
        bumped_vol_same_moneyness at K·S'/S
    """
    def smile(strip, strike):
        spec = european_spec(strip, n, strike, phi)
        return implied_black_vol(spec, uvdd_european(spec, params))

    base_forward = float(base_strip.forwards[n - 1])
    bumped_forward = float(bumped_strip.forwards[n - 1])
    rows = []
    for strike in strikes:
        moved = strike * bumped_forward / base_forward
        rows.append({
            "strike": strike,
            "moneyness": strike / base_forward,
            "base_vol": smile(base_strip, strike),
            "bumped_vol": smile(bumped_strip, strike),
            "bumped_vol_same_moneyness": smile(bumped_strip, moved),
        })
    frame = pd.DataFrame(rows)
    frame.attrs.update(base_forward=base_forward, bumped_forward=bumped_forward,
                       base_annuity=float(base_strip.annuities[n - 1]),
                       bumped_annuity=float(bumped_strip.annuities[n - 1]))
    return frame


def convergence_table(strip, model, strike, steps_range, deviations_range, mean_reversion=0.0,
                      order=3, expiries=None):
    """
    Largest relative European error against the analytic model per grid setting.

    Returns:
        DataFrame indexed by deviations with one column per steps_per_dev
    """
    expiries = expiries or range(1, strip.tenor.n_periods + 1)
    analytic = {n: model.european(n, european_spec(strip, n, strike)) for n in expiries}
    rows = []
    for deviations in deviations_range:
        for steps in steps_range:
            lattice = MfLattice(strip, model, mean_reversion, steps, deviations, order)
            errors = [abs(european_value(lattice, n, strike, notional=1.0) / analytic[n] - 1.0)
                      for n in expiries if analytic[n] > 0]
            rows.append({"deviations": deviations, "steps_per_dev": steps,
                         "max_relative_error": max(errors)})
            logger.debug("Grid %d x %d: max relative error %.2e", steps, deviations, max(errors))
    return pd.DataFrame(rows).pivot(index="deviations", columns="steps_per_dev",
                                    values="max_relative_error")


def bermudan_strike_sweep(strip, models, trade, strikes, mean_reversions, grid=None):
    """
    Bermudan and first-exercise European values across strikes.

    Args:
        strip: CoterminalStrip
        models: {label: MappingModel}
        trade: BermudanTrade template (strike replaced per row)
        strikes: Strikes to sweep
        mean_reversions: Mean-reversion levels for the Bermudan columns
        grid: Optional dict with steps_per_dev, deviations, order

    Returns:
        DataFrame with swap_value, european_<label> and bermudan_<label>_mr<a> columns
    """
    grid = grid or {}
    first = trade.exercise[0]
    rows = {strike: {"strike": strike,
                     "swap_value": underlying_swap_value(strip, first, strike, trade.phi,
                                                         trade.notional)}
            for strike in strikes}
    for label, model in models.items():
        for a in mean_reversions:
            lattice = MfLattice(strip, model, a, **grid)
            for strike in strikes:
                row = rows[strike]
                if a == mean_reversions[0]:
                    row[f"european_{label}"] = european_value(lattice, first, strike, trade.phi,
                                                              trade.notional)
                row[f"bermudan_{label}_mr{a:g}"] = bermudan_value(lattice, trade.with_strike(strike))
            logger.info("Swept %d strikes for %s at MR %.2f", len(strikes), label, a)
    return pd.DataFrame(list(rows.values()))
