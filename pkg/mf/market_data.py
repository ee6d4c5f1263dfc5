"""Yield curves, ATM volatility surfaces, smile ratio cubes and swap schedules."""

import datetime as dt
import logging
import re

import numpy as np
import pandas as pd
from dateutil.relativedelta import relativedelta
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import brentq

from mf.errors import MarketDataError, OutOfRangeError

logger = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.25
ACT360 = 360.0

_TENOR_PATTERN = re.compile(r"^\s*(\d+)\s*([DWMY])\s*$", re.IGNORECASE)


def year_fraction_act360(start, end):
    """ACT/360 accrual between two dates."""
    return (end - start).days / ACT360


def adjust_date(date, roll="modified_following"):
    """
    Roll a date off weekends.

    Args:
        date: Date to adjust
        roll: 'modified_following', 'following' or 'none'

    Returns:
        Adjusted date (no holiday calendar, Saturdays and Sundays only)
    """
    if roll == "none" or date.weekday() < 5:
        return date
    if roll not in ("following", "modified_following"):
        raise ValueError(f"Unknown date roll: {roll}")
    rolled = date + dt.timedelta(days=7 - date.weekday())
    if roll == "modified_following" and rolled.month != date.month:
        rolled = date - dt.timedelta(days=date.weekday() - 4)
    return rolled


def add_tenor(anchor, tenor, roll="modified_following"):
    """
    Add a tenor such as '2D', '1W', '6M', '5Y' (or a day count) to a date.

    Day tenors are calendar days and are not rolled.
    """
    if isinstance(tenor, (int, np.integer)):
        return anchor + dt.timedelta(days=int(tenor))
    match = _TENOR_PATTERN.match(str(tenor))
    if match is None:
        raise MarketDataError(f"Unparseable tenor: {tenor!r}")
    count, unit = int(match.group(1)), match.group(2).upper()
    if unit == "D":
        return anchor + dt.timedelta(days=count)
    if unit == "W":
        return adjust_date(anchor + dt.timedelta(weeks=count), roll)
    if unit == "M":
        return adjust_date(anchor + relativedelta(months=count), roll)
    return adjust_date(anchor + relativedelta(years=count), roll)


class YieldCurve:
    """Discount factors at day offsets from an anchor date."""

    INTERPOLATIONS = ("discount_factor", "zero_rate")

    def __init__(self, anchor_date, days, discount_factors, interpolation="discount_factor"):
        """
        Initialize curve.

        Args:
            anchor_date: Date at which D = 1
            days: Strictly increasing positive day offsets
            discount_factors: Factors at those offsets, all > 0
            interpolation: 'discount_factor' (linear in D) or 'zero_rate'
                (linear in -ln D / day, flat before the first node)
        """
        days = np.array(days, dtype=float)
        dfs = np.array(discount_factors, dtype=float)
        if days.ndim != 1 or days.shape != dfs.shape or days.size == 0:
            raise MarketDataError("Curve needs matching non-empty day and factor lists")
        if np.any(days <= 0) or np.any(np.diff(days) <= 0):
            raise MarketDataError("Curve day offsets must be positive and strictly increasing")
        if np.any(dfs <= 0) or not np.all(np.isfinite(dfs)):
            raise MarketDataError("Discount factors must be finite and strictly positive")
        if interpolation not in self.INTERPOLATIONS:
            raise ValueError(f"Unknown interpolation: {interpolation}")

        self.anchor_date = anchor_date
        self.days = days
        self.discount_factors = dfs
        self.interpolation = interpolation
        self._zero_rates = -np.log(dfs) / days
        self.days.setflags(write=False)
        self.discount_factors.setflags(write=False)

    @property
    def max_day(self):
        return float(self.days[-1])

    def discount_factor(self, day):
        """
        Discount factor at day offset(s); 1 at day 0, no extrapolation.

        Args:
            day: Scalar or array of day offsets in [0, max_day]

        Returns:
            Discount factor(s) with the shape of the input
        """
        day_arr = np.asarray(day, dtype=float)
        if np.any(day_arr < 0) or np.any(day_arr > self.days[-1]):
            raise OutOfRangeError(
                f"Day offset outside curve range [0, {self.days[-1]:.0f}]: {day}"
            )
        if self.interpolation == "discount_factor":
            out = np.interp(day_arr, np.concatenate(([0.0], self.days)),
                            np.concatenate(([1.0], self.discount_factors)))
        else:
            rates = np.interp(day_arr, self.days, self._zero_rates)
            out = np.exp(-rates * day_arr)
        return float(out) if out.ndim == 0 else out

    def discount_factor_at(self, date):
        return self.discount_factor((date - self.anchor_date).days)

    def bumped(self, parallel_bp=0.0, df_bumps=None):
        """
        Curve with every continuously compounded zero rate shifted by parallel_bp,
        then absolute discount-factor bumps {day: Δ} applied at existing nodes.
        """
        shift = parallel_bp * 1e-4 * self.days / DAYS_PER_YEAR
        dfs = self.discount_factors * np.exp(-shift)
        for day, delta in (df_bumps or {}).items():
            index = np.flatnonzero(self.days == float(day))
            if index.size == 0:
                raise MarketDataError(f"No curve node at day {day}")
            dfs[index[0]] += delta
        return YieldCurve(self.anchor_date, self.days, dfs, self.interpolation)

    def to_frame(self):
        return pd.DataFrame({"day": self.days.astype(int), "discount_factor": self.discount_factors})


class AtmVolSurface:
    """ATM Black vols on an (expiry day, tenor day) grid with bilinear interpolation."""

    def __init__(self, expiry_days, tenor_days, vols, extrapolation="error"):
        """
        Initialize surface.

        Args:
            expiry_days: Increasing expiry offsets
            tenor_days: Increasing tenor lengths
            vols: Array of shape (len(tenor_days), len(expiry_days))
            extrapolation: 'error' or 'flat' (clamp queries to the grid hull)
        """
        self.expiry_days = np.asarray(expiry_days, dtype=float)
        self.tenor_days = np.asarray(tenor_days, dtype=float)
        self.vols = np.asarray(vols, dtype=float)
        if self.vols.shape != (self.tenor_days.size, self.expiry_days.size):
            raise MarketDataError("Vol grid shape must be (tenors, expiries)")
        if np.any(np.diff(self.expiry_days) <= 0) or np.any(np.diff(self.tenor_days) <= 0):
            raise MarketDataError("Surface axes must be strictly increasing")
        if np.any(self.vols <= 0):
            raise MarketDataError("ATM vols must be positive")
        if extrapolation not in ("error", "flat"):
            raise ValueError(f"Unknown extrapolation policy: {extrapolation}")
        self.extrapolation = extrapolation
        self._interp = RegularGridInterpolator(
            (self.tenor_days, self.expiry_days), self.vols, method="linear", bounds_error=True
        )

    def _clamp(self, expiry_day, tenor_day):
        e_lo, e_hi = self.expiry_days[0], self.expiry_days[-1]
        t_lo, t_hi = self.tenor_days[0], self.tenor_days[-1]
        inside = e_lo <= expiry_day <= e_hi and t_lo <= tenor_day <= t_hi
        if not inside and self.extrapolation == "error":
            raise OutOfRangeError(
                f"(expiry {expiry_day}, tenor {tenor_day}) outside vol surface hull"
            )
        return float(np.clip(expiry_day, e_lo, e_hi)), float(np.clip(tenor_day, t_lo, t_hi))

    def atm_vol(self, expiry_day, tenor_day):
        """Bilinearly interpolated ATM vol."""
        expiry_day, tenor_day = self._clamp(expiry_day, tenor_day)
        return float(self._interp([[tenor_day, expiry_day]])[0])

    def scaled(self, factor):
        return AtmVolSurface(self.expiry_days, self.tenor_days, self.vols * factor,
                             self.extrapolation)


class SmileRatioCube:
    """Strike-offset vol ratios relative to ATM on an (expiry, tenor) grid."""

    def __init__(self, expiry_days, tenor_days, offsets_bp, ratios, extrapolation="error"):
        """
        Initialize cube.

        Args:
            expiry_days: Increasing expiry offsets
            tenor_days: Increasing tenor lengths
            offsets_bp: Strictly increasing strike offsets vs ATM, must contain 0
            ratios: Array of shape (tenors, expiries, offsets)
            extrapolation: Expiry/tenor policy, 'error' or 'flat'; strike offsets
                are never extrapolated
        """
        self.expiry_days = np.asarray(expiry_days, dtype=float)
        self.tenor_days = np.asarray(tenor_days, dtype=float)
        self.offsets_bp = np.asarray(offsets_bp, dtype=float)
        self.ratios = np.asarray(ratios, dtype=float)
        if np.any(np.diff(self.offsets_bp) <= 0):
            raise MarketDataError("Strike offsets must be strictly increasing")
        if self.ratios.shape != (self.tenor_days.size, self.expiry_days.size, self.offsets_bp.size):
            raise MarketDataError("Ratio array shape must be (tenors, expiries, offsets)")
        zero = np.flatnonzero(self.offsets_bp == 0)
        if zero.size != 1 or not np.allclose(self.ratios[:, :, zero[0]], 1.0, atol=1e-12):
            raise MarketDataError("Ratio at offset 0 must equal 1.0")
        self.extrapolation = extrapolation
        # Singleton axes are padded so RegularGridInterpolator sees at least two nodes
        tenors, expiries, ratios = self.tenor_days, self.expiry_days, self.ratios
        if tenors.size == 1:
            tenors = np.array([tenors[0], tenors[0] + 1.0])
            ratios = np.concatenate([ratios, ratios], axis=0)
        if expiries.size == 1:
            expiries = np.array([expiries[0], expiries[0] + 1.0])
            ratios = np.concatenate([ratios, ratios], axis=1)
        self._interp = RegularGridInterpolator(
            (tenors, expiries, self.offsets_bp), ratios, method="linear", bounds_error=True
        )

    def ratio(self, expiry_day, tenor_day, offset_bp):
        """Trilinear ratio at a strike offset."""
        if not self.offsets_bp[0] <= offset_bp <= self.offsets_bp[-1]:
            raise OutOfRangeError(f"Strike offset {offset_bp}bp outside quoted ratios")
        e_lo, e_hi = self.expiry_days[0], self.expiry_days[-1]
        t_lo, t_hi = self.tenor_days[0], self.tenor_days[-1]
        if not (e_lo <= expiry_day <= e_hi and t_lo <= tenor_day <= t_hi):
            if self.extrapolation == "error":
                raise OutOfRangeError(
                    f"(expiry {expiry_day}, tenor {tenor_day}) outside ratio cube"
                )
            expiry_day = float(np.clip(expiry_day, e_lo, e_hi))
            tenor_day = float(np.clip(tenor_day, t_lo, t_hi))
        return float(self._interp([[tenor_day, expiry_day, offset_bp]])[0])


def smile_vol(cube, surface, expiry_day, tenor_day, offset_bp):
    """Volatility at ATM + offset_bp: ATM vol times the interpolated ratio."""
    atm = surface.atm_vol(expiry_day, tenor_day)
    if offset_bp == 0:
        return atm
    return atm * cube.ratio(expiry_day, tenor_day, offset_bp)


class TenorStructure:
    """Reset dates T_1..T_{N+1} with ACT/360 accruals and ACT/365.25 model times."""

    def __init__(self, valuation_date, dates, frequency_months):
        if len(dates) < 2:
            raise MarketDataError("Tenor structure needs at least two dates")
        if any(b <= a for a, b in zip(dates[:-1], dates[1:])):
            raise MarketDataError("Reset dates must be strictly increasing")
        if dates[0] < valuation_date:
            raise MarketDataError("First reset date precedes the valuation date")
        self.valuation_date = valuation_date
        self.dates = list(dates)
        self.frequency_months = frequency_months
        self.day_offsets = np.array([(d - valuation_date).days for d in dates], dtype=float)
        self.accruals = np.array(
            [year_fraction_act360(a, b) for a, b in zip(dates[:-1], dates[1:])]
        )
        self.times = self.day_offsets / DAYS_PER_YEAR

    @property
    def n_periods(self):
        return len(self.dates) - 1

    def vol_tenor_day(self, n):
        """Tenor length in days used for the vol lookup of expiry n (1-based)."""
        return (self.n_periods + 1 - n) * self.frequency_months * 30


def build_schedule(valuation_date, start_date, periods, frequency_months,
                   roll="modified_following"):
    """
    Generate a co-terminal tenor structure.

    Args:
        valuation_date: Today
        start_date: First reset date T_1 (unadjusted)
        periods: Number of accrual periods N
        frequency_months: Months per period
        roll: Date roll convention

    Returns:
        TenorStructure with N+1 dates
    """
    if periods < 1 or frequency_months < 1:
        raise MarketDataError("periods and frequency_months must be positive")
    dates = [
        adjust_date(start_date + relativedelta(months=k * frequency_months), roll)
        for k in range(periods + 1)
    ]
    return TenorStructure(valuation_date, dates, frequency_months)


class CoterminalStrip:
    """Today's discount factors, annuities, forward swap rates and ATM vols per expiry."""

    def __init__(self, tenor, discount_factors, atm_vols=None):
        """
        Initialize strip.

        Args:
            tenor: TenorStructure
            discount_factors: D_1(0)..D_{N+1}(0)
            atm_vols: Optional ATM vols per expiry n = 1..N
        """
        self.tenor = tenor
        self.discount_factors = np.asarray(discount_factors, dtype=float)
        if self.discount_factors.size != tenor.n_periods + 1:
            raise MarketDataError("Strip needs N+1 discount factors")
        weighted = tenor.accruals * self.discount_factors[1:]
        self.annuities = np.cumsum(weighted[::-1])[::-1]
        self.forwards = (self.discount_factors[:-1] - self.discount_factors[-1]) / self.annuities
        self.atm_vols = None if atm_vols is None else np.asarray(atm_vols, dtype=float)

    @classmethod
    def from_market(cls, curve, tenor, surface=None):
        dfs = curve.discount_factor(tenor.day_offsets)
        vols = None
        if surface is not None:
            vols = [surface.atm_vol(tenor.day_offsets[n - 1], tenor.vol_tenor_day(n))
                    for n in range(1, tenor.n_periods + 1)]
        return cls(tenor, dfs, vols)

    @property
    def numeraire_df(self):
        return float(self.discount_factors[-1])

    def bump_discount(self, n, delta):
        """Strip with D_n(0) (1-based) shifted by an absolute amount."""
        dfs = self.discount_factors.copy()
        dfs[n - 1] += delta
        if dfs[n - 1] <= 0:
            raise MarketDataError("Bumped discount factor is not positive")
        return CoterminalStrip(self.tenor, dfs, self.atm_vols)


def bootstrap_curve(anchor_date, deposits, par_swaps, roll="modified_following",
                    interpolation="zero_rate"):
    """
    Bootstrap discount factors from deposits and spot-starting annual par swaps.

    Args:
        anchor_date: Spot date of every instrument
        deposits: List of (tenor, rate); tenor like '1M' or a day count
        par_swaps: List of (tenor_years, par_rate), annual fixed legs, ACT/360
        roll: Date roll for deposit and swap dates
        interpolation: Interpolation of the resulting curve

    Returns:
        YieldCurve that reprices every input
    """
    days, dfs = [], []
    for tenor, rate in deposits:
        day = (add_tenor(anchor_date, tenor, roll) - anchor_date).days
        if days and day <= days[-1]:
            raise MarketDataError(f"Deposit tenors must be strictly increasing: {tenor}")
        df = 1.0 / (1.0 + rate * day / ACT360)
        if df <= 0:
            raise MarketDataError(f"Negative discount factor from deposit {tenor}")
        days.append(day)
        dfs.append(df)

    last_years = 0
    for years, rate in par_swaps:
        if years <= last_years:
            raise MarketDataError("Swap tenors must be strictly increasing")
        last_years = years
        fixed_dates = [adjust_date(anchor_date + relativedelta(years=k), roll)
                       for k in range(years + 1)]
        accruals = [year_fraction_act360(a, b) for a, b in zip(fixed_dates[:-1], fixed_dates[1:])]
        fixed_days = [(d - anchor_date).days for d in fixed_dates[1:]]
        end_day = fixed_days[-1]
        if days and end_day <= days[-1]:
            raise MarketDataError(f"Swap maturity {years}y does not extend the curve")

        needs_solve = len(fixed_days) > 1 and (not days or fixed_days[-2] > days[-1])
        if needs_solve:
            df_end = _solve_swap_node(anchor_date, days, dfs, fixed_days, accruals, rate,
                                      interpolation)
        else:
            known = 0.0
            if len(fixed_days) > 1:
                curve = YieldCurve(anchor_date, days, dfs, interpolation)
                known = float(np.dot(accruals[:-1], curve.discount_factor(fixed_days[:-1])))
            df_end = (1.0 - rate * known) / (1.0 + rate * accruals[-1])
        if df_end <= 0:
            raise MarketDataError(f"Negative discount factor from {years}y swap")
        days.append(end_day)
        dfs.append(df_end)

    logger.debug("Bootstrapped %d curve points", len(days))
    return YieldCurve(anchor_date, days, dfs, interpolation)


def _solve_swap_node(anchor_date, days, dfs, fixed_days, accruals, rate, interpolation):
    """Solve the maturity factor of a swap whose intermediate fixings lie beyond the curve."""
    def residual(df_end):
        trial = YieldCurve(anchor_date, days + [fixed_days[-1]], dfs + [df_end], interpolation)
        annuity = float(np.dot(accruals, trial.discount_factor(fixed_days)))
        return 1.0 - df_end - rate * annuity

    try:
        return brentq(residual, 1e-8, 2.0, xtol=1e-16, rtol=4e-16)
    except ValueError as exc:
        raise MarketDataError("Swap bootstrap has no positive solution") from exc


def par_swap_value(curve, years, rate, roll="modified_following"):
    """Value of a spot-starting annual payer swap per unit notional."""
    anchor = curve.anchor_date
    fixed_dates = [adjust_date(anchor + relativedelta(years=k), roll) for k in range(years + 1)]
    accruals = np.array([year_fraction_act360(a, b) for a, b in zip(fixed_dates[:-1], fixed_dates[1:])])
    dfs = np.array([curve.discount_factor_at(d) for d in fixed_dates[1:]])
    return 1.0 - dfs[-1] - rate * float(np.dot(accruals, dfs))


def load_curve(path, anchor_date, interpolation="discount_factor"):
    """Load a (day, bid, ask) CSV; bid and ask are averaged."""
    frame = pd.read_csv(path)
    missing = {"day", "bid", "ask"} - set(frame.columns)
    if missing:
        raise MarketDataError(f"Curve file {path} missing columns: {sorted(missing)}")
    mid = 0.5 * (frame["bid"].to_numpy(float) + frame["ask"].to_numpy(float))
    return YieldCurve(anchor_date, frame["day"].to_numpy(float), mid, interpolation)


def load_atm_surface(path, extrapolation="error"):
    """Load a surface CSV whose first column is tenor_day and other headers are expiry days."""
    frame = pd.read_csv(path)
    if frame.columns[0] != "tenor_day":
        raise MarketDataError(f"Surface file {path} must start with a tenor_day column")
    expiries = [float(c) for c in frame.columns[1:]]
    return AtmVolSurface(expiries, frame["tenor_day"].to_numpy(float),
                         frame.iloc[:, 1:].to_numpy(float), extrapolation)


def load_ratio_cube(path, extrapolation="error"):
    """Load a long-format (expiry_day, tenor_day, offset_bp, ratio) CSV."""
    frame = pd.read_csv(path)
    missing = {"expiry_day", "tenor_day", "offset_bp", "ratio"} - set(frame.columns)
    if missing:
        raise MarketDataError(f"Ratio cube {path} missing columns: {sorted(missing)}")
    expiries = np.sort(frame["expiry_day"].unique())
    tenors = np.sort(frame["tenor_day"].unique())
    offsets = np.sort(frame["offset_bp"].unique())
    cube = frame.set_index(["tenor_day", "expiry_day", "offset_bp"])["ratio"]
    full_index = pd.MultiIndex.from_product([tenors, expiries, offsets])
    cube = cube.reindex(full_index)
    if cube.isna().any():
        raise MarketDataError(f"Ratio cube {path} is not a full (tenor, expiry, offset) grid")
    ratios = cube.to_numpy().reshape(tenors.size, expiries.size, offsets.size)
    return SmileRatioCube(expiries, tenors, offsets, ratios, extrapolation)
