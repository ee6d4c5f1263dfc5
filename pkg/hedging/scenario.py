"""Daily market snapshots and the synthetic scenarios the hedging backtest runs on."""

import datetime as dt
import logging
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from dateutil.parser import isoparse

from mf.errors import MarketDataError
from mf.market_data import AtmVolSurface, bootstrap_curve

logger = logging.getLogger(__name__)

DEPOSIT_TENORS = ("2D", "1W", "1M", "2M", "3M", "6M", "9M")
SWAP_YEARS = tuple(range(1, 16))
SURFACE_EXPIRY_DAYS = (30, 365, 730, 1825, 3650)
SURFACE_TENOR_DAYS = (360, 1800, 3600)

_TENOR_YEARS = {"D": 1 / 365.0, "W": 7 / 365.0, "M": 1 / 12.0, "Y": 1.0}
_MAX_REDRAWS = 100


def tenor_years(tenor):
    return int(tenor[:-1]) * _TENOR_YEARS[tenor[-1].upper()]


@dataclass(frozen=True)
class MarketSnapshot:
    """
    One morning's market: deposits, spot par swaps, ATM vols and smile shape.

    Smile shape is carried per co-terminal expiry as (ω_n, m_n) with a common
    weight λ; σ¹ is set from the ATM vol when the snapshot is used.
    """

    date: dt.date
    deposits: tuple
    swaps: tuple
    surface: AtmVolSurface
    omegas: tuple
    displacements: tuple
    lam: float = 0.75

    @property
    def short_rate(self):
        return float(self.deposits[0][1])

    @property
    def input_labels(self):
        return tuple(t for t, _ in self.deposits) + tuple(f"{y}Y" for y, _ in self.swaps)

    def curve(self, roll="modified_following"):
        return bootstrap_curve(self.date, list(self.deposits), list(self.swaps), roll)

    def bumped(self, index, bp):
        """Snapshot with the index-th curve input (deposits first) shifted by bp."""
        shift = bp * 1e-4
        deposits, swaps = list(self.deposits), list(self.swaps)
        if index < len(deposits):
            tenor, rate = deposits[index]
            deposits[index] = (tenor, rate + shift)
        else:
            years, rate = swaps[index - len(deposits)]
            swaps[index - len(deposits)] = (years, rate + shift)
        return replace(self, deposits=tuple(deposits), swaps=tuple(swaps))


def base_rate(years, level, slope):
    """Upward-sloping par curve level + slope·(1 − e^{−t/3})."""
    return level + slope * (1.0 - np.exp(-years / 3.0))


def vol_surface(level):
    """ATM surface with a downward expiry term structure scaled to level."""
    expiries = np.asarray(SURFACE_EXPIRY_DAYS, dtype=float)
    tenors = np.asarray(SURFACE_TENOR_DAYS, dtype=float)
    expiry_shape = 1.15 - 0.25 * np.minimum(expiries / 3650.0, 1.0)
    tenor_shape = 1.0 - 0.1 * tenors / 3600.0
    vols = level * tenor_shape[:, None] * expiry_shape[None, :]
    return AtmVolSurface(expiries, tenors, vols, extrapolation="flat")


def build_synthetic_smiles(node_dates, node_omegas, node_displacements, dates):
    """
    Daily (ω_n, m_n) by linear interpolation in calendar time between smile nodes.

    Days outside the node range hold the nearest node.

    Returns:
        (omegas, displacements), arrays of shape (len(dates), n_expiries)
    """
    node_x = np.array([d.toordinal() for d in node_dates], dtype=float)
    if np.any(np.diff(node_x) <= 0):
        raise MarketDataError("Smile node dates must be strictly increasing")
    day_x = np.array([d.toordinal() for d in dates], dtype=float)
    node_omegas = np.asarray(node_omegas, dtype=float)
    node_displacements = np.asarray(node_displacements, dtype=float)
    omegas = np.column_stack([np.interp(day_x, node_x, node_omegas[:, k])
                              for k in range(node_omegas.shape[1])])
    displacements = np.column_stack([np.interp(day_x, node_x, node_displacements[:, k])
                                     for k in range(node_displacements.shape[1])])
    return omegas, displacements


def _month_end_nodes(dates):
    """Last business day of each month plus the first day."""
    frame = pd.Series(pd.to_datetime(dates))
    ends = frame.groupby([frame.dt.year, frame.dt.month]).max()
    nodes = sorted({dates[0], *(d.date() for d in ends)})
    return nodes


def _rates(level, slope, shift):
    deposits = tuple((t, float(base_rate(tenor_years(t), level, slope) + shift))
                     for t in DEPOSIT_TENORS)
    swaps = tuple((y, float(base_rate(y, level, slope) + shift)) for y in SWAP_YEARS)
    return deposits, swaps


def _valid(date, deposits, swaps, floor):
    if min(r for _, r in deposits + swaps) <= floor:
        return False
    try:
        bootstrap_curve(date, list(deposits), list(swaps))
    except MarketDataError:
        return False
    return True


def generate_synthetic_scenario(config, n_expiries, seed=None):
    """
    Seeded daily market history with correlated rate and vol random walks.

    Args:
        config: Dict with start_date, days, level, slope, rate_vol_bp, drift_bp,
            vol_level, vol_of_vol, rate_vol_corr, omega_range, m_range, lam,
            rate_floor
        n_expiries: Number of co-terminal expiries carrying smile parameters
        seed: Overrides config['seed']

    Returns:
        List of MarketSnapshot on consecutive business days
    """
    rng = np.random.default_rng(config.get("seed", 0) if seed is None else seed)
    start = config["start_date"]
    start = isoparse(start).date() if isinstance(start, str) else start
    dates = [d.date() for d in pd.bdate_range(start, periods=config["days"])]
    rate_vol = config.get("rate_vol_bp", 5.0) * 1e-4
    drift = config.get("drift_bp", 0.0) * 1e-4
    vol_of_vol = config.get("vol_of_vol", 0.0)
    corr = config.get("rate_vol_corr", 0.0)
    floor = config.get("rate_floor", 0.001)
    cov = np.array([[1.0, corr], [corr, 1.0]])

    shifts, log_vols = [], []
    shift, log_vol = 0.0, 0.0
    for i, date in enumerate(dates):
        for _ in range(_MAX_REDRAWS):
            shock = rng.multivariate_normal(np.zeros(2), cov) if i > 0 else np.zeros(2)
            trial_shift = shift + (drift + rate_vol * shock[0] if i > 0 else 0.0)
            deposits, swaps = _rates(config["level"], config["slope"], trial_shift)
            if _valid(date, deposits, swaps, floor):
                break
        else:
            raise MarketDataError(f"No valid curve drawn for {date}")
        shift = trial_shift
        log_vol = log_vol + vol_of_vol * shock[1] - (0.5 * vol_of_vol ** 2 if i > 0 else 0.0)
        shifts.append(shift)
        log_vols.append(log_vol)

    node_dates = _month_end_nodes(dates)
    omega_lo, omega_hi = config.get("omega_range", (1.0, 1.0))
    m_lo, m_hi = config.get("m_range", (0.0, 0.0))
    node_omegas = rng.uniform(omega_lo, omega_hi, size=(len(node_dates), n_expiries))
    node_ms = rng.uniform(m_lo, m_hi, size=(len(node_dates), n_expiries))
    if len(node_dates) == 1:
        node_dates = [node_dates[0], node_dates[0] + dt.timedelta(days=1)]
        node_omegas = np.vstack([node_omegas, node_omegas])
        node_ms = np.vstack([node_ms, node_ms])
    omegas, displacements = build_synthetic_smiles(node_dates, node_omegas, node_ms, dates)

    lam = config.get("lam", 0.75)
    snapshots = []
    for i, date in enumerate(dates):
        deposits, swaps = _rates(config["level"], config["slope"], shifts[i])
        surface = vol_surface(config["vol_level"] * np.exp(log_vols[i]))
        snapshots.append(MarketSnapshot(date, deposits, swaps, surface, tuple(omegas[i]),
                                        tuple(displacements[i]), lam))
    logger.info("Generated %d-day scenario from %s (rate drift %.2fbp/day)", len(snapshots),
                dates[0], config.get("drift_bp", 0.0))
    return snapshots


def reversed_scenario(snapshots):
    """Market history played backwards on the original calendar."""
    markets = snapshots[::-1]
    return [replace(market, date=snap.date) for snap, market in zip(snapshots, markets)]


def frozen_scenario(snapshot, days):
    """The same market repeated on consecutive business days."""
    dates = [d.date() for d in pd.bdate_range(snapshot.date, periods=days)]
    return [replace(snapshot, date=d) for d in dates]


def save_scenario(snapshots, path):
    rows = []
    for snap in snapshots:
        row = {"date": snap.date.isoformat(), "lam": snap.lam}
        row.update({f"dep_{t}": r for t, r in snap.deposits})
        row.update({f"swap_{y}Y": r for y, r in snap.swaps})
        surface = snap.surface
        for i, tenor in enumerate(surface.tenor_days):
            for j, expiry in enumerate(surface.expiry_days):
                row[f"vol_{int(expiry)}_{int(tenor)}"] = surface.vols[i, j]
        row.update({f"omega_{n}": v for n, v in enumerate(snap.omegas, start=1)})
        row.update({f"m_{n}": v for n, v in enumerate(snap.displacements, start=1)})
        rows.append(row)
    pd.DataFrame(rows).to_csv(path, index=False, float_format="%.17g")


def load_scenario(path):
    frame = pd.read_csv(path)
    if "date" not in frame.columns:
        raise MarketDataError(f"Scenario file {path} has no date column")
    dep_cols = [c for c in frame.columns if c.startswith("dep_")]
    swap_cols = [c for c in frame.columns if c.startswith("swap_")]
    vol_cols = [c for c in frame.columns if c.startswith("vol_")]
    omega_cols = sorted((c for c in frame.columns if c.startswith("omega_")),
                        key=lambda c: int(c.split("_")[1]))
    m_cols = sorted((c for c in frame.columns if c.startswith("m_")),
                    key=lambda c: int(c.split("_")[1]))
    expiries = sorted({float(c.split("_")[1]) for c in vol_cols})
    tenors = sorted({float(c.split("_")[2]) for c in vol_cols})

    snapshots = []
    for _, row in frame.iterrows():
        vols = np.array([[row[f"vol_{int(e)}_{int(t)}"] for e in expiries] for t in tenors])
        snapshots.append(MarketSnapshot(
            isoparse(row["date"]).date(),
            tuple((c[4:], float(row[c])) for c in dep_cols),
            tuple((int(c[5:-1]), float(row[c])) for c in swap_cols),
            AtmVolSurface(expiries, tenors, vols, extrapolation="flat"),
            tuple(float(row[c]) for c in omega_cols),
            tuple(float(row[c]) for c in m_cols),
            float(row["lam"]),
        ))
    return snapshots
