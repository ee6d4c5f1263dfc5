"""
Digital-mapping construction of the Markov-functional lattice.

Working backward from the last reset date, each date n gets:

* R_n(x) = P_n(x) / D_{N+1}(x), the annuity in units of the terminal bond,
* S_n(x), pinned so that lattice digitals equal the market digital model,
* D_{N+1}(x) = 1 / (1 + S_n(x) R_n(x)),
* L_n(x), the LIBOR fixing for [T_n, T_{n+1}].

Lattice digitals are cumulative integrals of R_n against the unconditional
law of X_n, so S_n(x) is monotone by construction.
"""

import datetime as dt
import json
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr, ndtri
from sklearn.metrics import r2_score

from mf.analytic import SwaptionSpec, UVDDParams, black_european, uvdd_european
from mf.driver import DriverSpec
from mf.errors import MappingError, MarketDataError
from mf.market_data import CoterminalStrip, TenorStructure
from mf.quadrature import GaussianTransition

logger = logging.getLogger(__name__)

DUMP_VERSION = 1
_NEWTON_TOL = 1e-12
_MAX_ITER = 200


class MappingModel:
    """Market digital model per expiry: Black with σ̄_n or a UVDD mixture (DD is λ = 1)."""

    def __init__(self, kind, vols=None, params=None):
        if kind not in ("black", "uvdd"):
            raise ValueError(f"Unknown mapping kind: {kind}")
        if kind == "black" and vols is None:
            raise ValueError("Black mapping needs one vol per expiry")
        if kind == "uvdd" and params is None:
            raise ValueError("UVDD mapping needs parameters per expiry")
        self.kind = kind
        self.vols = None if vols is None else [float(v) for v in vols]
        self.params = None if params is None else list(params)

    @classmethod
    def black(cls, vols):
        return cls("black", vols=vols)

    @classmethod
    def uvdd(cls, params):
        return cls("uvdd", params=params)

    @classmethod
    def dd(cls, displacements, sigmas):
        return cls("uvdd", params=[UVDDParams(m, (s,), (1.0,))
                                   for m, s in zip(displacements, sigmas)])

    def __len__(self):
        return len(self.vols) if self.kind == "black" else len(self.params)

    def european(self, n, spec):
        """Analytic European under the model for expiry n (1-based)."""
        if self.kind == "black":
            return black_european(spec, self.vols[n - 1])
        return uvdd_european(spec, self.params[n - 1])

    def bumped(self, n, amount):
        """Model with σ̄_n (Black) or σ¹_n (UVDD, ω fixed) shifted by amount."""
        if self.kind == "black":
            vols = list(self.vols)
            vols[n - 1] += amount
            return MappingModel.black(vols)
        params = list(self.params)
        params[n - 1] = params[n - 1].with_sigma1(params[n - 1].sigma1 + amount)
        return MappingModel.uvdd(params)

    def describe(self):
        if self.kind == "black":
            return {"kind": "black", "vols": self.vols}
        return {"kind": "uvdd", "params": [
            {"m": p.m, "sigmas": list(p.sigmas), "weights": list(p.weights)} for p in self.params
        ]}

    @classmethod
    def from_description(cls, desc):
        if desc["kind"] == "black":
            return cls.black(desc["vols"])
        return cls.uvdd([UVDDParams(p["m"], tuple(p["sigmas"]), tuple(p["weights"]))
                         for p in desc["params"]])

    def swap_rates(self, n, forward, expiry, lower, upper):
        """
        Invert digital probabilities into swap-rate levels.

        Args:
            n: Expiry index (1-based)
            forward: S_n(0)
            expiry: T_n in years
            lower: Q(S_n <= s) at each node
            upper: Q(S_n > s) at each node, computed independently of lower

        Returns:
            Swap rate per node
        """
        if self.kind == "black":
            return invert_black(forward, self.vols[n - 1], expiry, lower, upper)
        return invert_uvdd(self.params[n - 1], forward, expiry, lower, upper)


def _normal_quantile(lower, upper):
    """Φ⁻¹ of the lower probability, taken from the smaller tail."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    use_lower = lower <= upper
    return use_lower, np.where(use_lower, ndtri(lower), -ndtri(upper))


def invert_black(forward, vol, expiry, lower, upper):
    """S = S_0·exp(−½σ²T + σ√T·Φ⁻¹(q))."""
    _, quantile = _normal_quantile(lower, upper)
    return forward * np.exp(-0.5 * vol * vol * expiry + vol * np.sqrt(expiry) * quantile)


def invert_uvdd(params, forward, expiry, lower, upper):
    """
    Solve Σ w_i Φ(d_i(S)) = q for S per node by safeguarded Newton in y = log(S + m).

    The root lies between the smallest and largest single-component solutions,
    which bracket it for every node.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    use_lower, quantile = _normal_quantile(lower, upper)
    sqrt_t = np.sqrt(expiry)
    sigmas = np.asarray(params.sigmas)[:, None]
    weights = np.asarray(params.weights)[:, None]
    base = np.log(forward + params.m)
    candidates = base - 0.5 * sigmas ** 2 * expiry + sigmas * sqrt_t * quantile[None, :]
    low = candidates.min(axis=0)
    high = candidates.max(axis=0)
    y = np.clip((weights * candidates).sum(axis=0), low, high)
    target = np.where(use_lower, lower, upper)

    def residual(y_val):
        d = (y_val[None, :] - base + 0.5 * sigmas ** 2 * expiry) / (sigmas * sqrt_t)
        below = (weights * ndtr(d)).sum(axis=0)
        above = (weights * ndtr(-d)).sum(axis=0)
        value = np.where(use_lower, below - lower, upper - above)
        slope = (weights * np.exp(-0.5 * d * d) / (np.sqrt(2.0 * np.pi) * sigmas * sqrt_t)).sum(axis=0)
        return value, slope

    done = (high - low) <= 1e-15 * (1.0 + np.abs(y))
    for _ in range(_MAX_ITER):
        value, slope = residual(y)
        done |= np.abs(value) <= _NEWTON_TOL * target
        done |= (high - low) <= 1e-15 * (1.0 + np.abs(y))
        if np.all(done):
            break
        low = np.where(value < 0, y, low)
        high = np.where(value > 0, y, high)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = y - value / slope
        bisect = 0.5 * (low + high)
        step = np.where(np.isfinite(newton) & (newton > low) & (newton < high), newton, bisect)
        y = np.where(done, y, step)
    else:
        logger.warning("Mixture inversion hit the iteration cap on %d nodes", int(np.sum(~done)))
    return np.exp(y) - params.m


@dataclass
class MappedDate:
    """Functional forms on the grid of one reset date."""

    x: np.ndarray
    numeraire_ratio: np.ndarray
    swap_rate: np.ndarray
    numeraire_df: np.ndarray
    libor: np.ndarray
    scaled_digital: np.ndarray
    next_bond_ratio: np.ndarray

    @property
    def inverse_numeraire(self):
        return 1.0 / self.numeraire_df


@lru_cache(maxsize=64)
def _transition(geometry, target, source, order):
    """Cached Gaussian transition between two dates of one lattice geometry."""
    mean_reversion, times, steps, devs = geometry
    driver = DriverSpec(mean_reversion, times)
    grid = driver.build_grid(steps, devs)
    t_source = times[source - 1]
    if target == 0:
        return GaussianTransition(grid.nodes[source - 1], [0.0], driver.stdev(0.0, t_source), order)
    t_target = times[target - 1]
    return GaussianTransition(grid.nodes[source - 1], grid.nodes[target - 1],
                              driver.stdev(t_target, t_source), order)


class MfLattice:
    """
    Markov-functional lattice mapped to a co-terminal strip.

    Dates are indexed 1..N like the reset dates; date 0 is today with the
    single state x = 0.
    """

    def __init__(self, strip, model, mean_reversion=0.0, steps_per_dev=10, deviations=10,
                 order=3, prob_floor=1e-300, build=True):
        """
        Initialize and map the lattice.

        Args:
            strip: CoterminalStrip with today's D_n(0), P_n(0), S_n(0)
            model: MappingModel with one entry per expiry
            mean_reversion: a in τ(t) = e^{at}
            steps_per_dev: Grid nodes per standard deviation of X_n
            deviations: Grid half-width in standard deviations
            order: Local polynomial order for the quadrature
            prob_floor: Clamp for digital probabilities before inversion
            build: Run the backward induction immediately
        """
        self.strip = strip
        self.tenor = strip.tenor
        self.n_periods = self.tenor.n_periods
        if len(model) != self.n_periods:
            raise MarketDataError("Mapping model needs one entry per expiry")
        self.model = model
        self.mean_reversion = float(mean_reversion)
        self.steps_per_dev = int(steps_per_dev)
        self.deviations = int(deviations)
        self.order = int(order)
        self.prob_floor = float(prob_floor)
        self.times = tuple(float(t) for t in self.tenor.times)
        self.driver = DriverSpec(self.mean_reversion, self.times)
        self.grid = self.driver.build_grid(self.steps_per_dev, self.deviations)
        self.dates = [None] * self.n_periods
        self.clamp_count = 0
        if build:
            self._build()

    @property
    def geometry(self):
        return (self.mean_reversion, self.times, self.steps_per_dev, self.deviations)

    @property
    def numeraire_today(self):
        return self.strip.numeraire_df

    def grid_params(self):
        return {"steps_per_dev": self.steps_per_dev, "deviations": self.deviations,
                "order": self.order, "mean_reversion": self.mean_reversion}

    def transition(self, source, target):
        """Transition from date source to date target < source (0 = today)."""
        if not 0 <= target < source <= self.n_periods:
            raise ValueError(f"Bad transition {source} -> {target}")
        return _transition(self.geometry, target, source, self.order)

    def conditional_transition(self, source, t_from, x_from):
        """Transition from date source back to arbitrary states at time t_from."""
        sigma = self.driver.stdev(t_from, self.times[source - 1])
        return GaussianTransition(self.grid.nodes[source - 1], np.atleast_1d(x_from), sigma,
                                  self.order)

    def date(self, n):
        return self.dates[n - 1]

    def _build(self):
        N = self.n_periods
        ratio, next_bond = self.terminal_date_init()
        for n in range(N, 0, -1):
            if n < N:
                ratio, next_bond = self.propagate_ratio(n)
            lower, upper = self.scaled_digital(n, ratio)
            annuity = self.strip.annuities[n - 1]
            swap_rate = self.model.swap_rates(n, self.strip.forwards[n - 1], self.times[n - 1],
                                              *self._clamp(n, lower / annuity, upper / annuity))
            self.dates[n - 1] = self.close_date(n, ratio, swap_rate, next_bond, lower)
        logger.info("Mapped %d dates (%s, a=%.3f, %d nodes/date)", N, self.model.kind,
                    self.mean_reversion, self.grid.size)

    def terminal_date_init(self):
        """R_N = α_N and D_{N+1}/D_{N+1} = 1 on the last reset date."""
        N = self.n_periods
        return np.full(self.grid.size, self.tenor.accruals[N - 1]), np.ones(self.grid.size)

    def propagate_ratio(self, n):
        """
        R_n and E[1/D_{N+1}(X_{n+1}) | x_n] from the mapped date n + 1.

        R_n = E[α_n / D_{N+1}(X_{n+1}) + R_{n+1}(X_{n+1}) | x_n].
        """
        following = self.date(n + 1)
        step = self.transition(n + 1, n)
        next_bond = step.expect(following.inverse_numeraire)
        ratio = self.tenor.accruals[n - 1] * next_bond + step.expect(following.numeraire_ratio)
        return ratio, next_bond

    def scaled_digital(self, n, ratio):
        """
        Lattice receiver and payer digitals struck at S_n(x) for every node x.

        Returns:
            (lower, upper): D_{N+1}(0)·E_0[R_n; X_n ≤ x] and the complementary
            upper integral, both in currency per unit notional
        """
        lower, upper = self.transition(n, 0).cumulative(ratio)
        return self.numeraire_today * lower, self.numeraire_today * upper

    def _clamp(self, n, lower_prob, upper_prob):
        clamped = (lower_prob < self.prob_floor) | (upper_prob < self.prob_floor)
        if np.any(clamped):
            self.clamp_count += int(np.sum(clamped))
            logger.warning("Clamped %d digital probabilities on date %d", int(np.sum(clamped)), n)
        return np.clip(lower_prob, self.prob_floor, 1.0), np.clip(upper_prob, self.prob_floor, 1.0)

    def close_date(self, n, ratio, swap_rate, next_bond, scaled_lower=None):
        """Terminal bond and LIBOR functional forms from S_n(x) and R_n(x)."""
        numeraire_df = 1.0 / (1.0 + swap_rate * ratio)
        if not np.all(np.isfinite(numeraire_df)) or np.any(numeraire_df <= 0):
            raise MappingError(
                f"Terminal bond not positive on date {n}",
                {"date": n, "min_swap_rate": float(np.nanmin(swap_rate)),
                 "min_ratio": float(np.nanmin(ratio))},
            )
        libor = (1.0 / (numeraire_df * next_bond) - 1.0) / self.tenor.accruals[n - 1]
        if scaled_lower is None:
            scaled_lower, _ = self.scaled_digital(n, ratio)
        return MappedDate(self.grid.nodes[n - 1], np.asarray(ratio, dtype=float).copy(),
                          swap_rate, numeraire_df, libor, scaled_lower, np.asarray(next_bond).copy())

    def reconstruct_bond(self, k, n):
        """
        D_k at date n on the date-n grid (n = 0 gives today's scalar).

        Uses D_k(x_n) = D_{N+1}(x_n) · E[1 / D_{N+1}(X_k) | x_n].
        """
        N = self.n_periods
        if not 0 <= n <= k <= N + 1:
            raise ValueError(f"Need 0 <= n <= k <= N+1, got n={n}, k={k}")
        terminal = self.numeraire_today if n == 0 else self.date(n).numeraire_df
        if k == n:
            return 1.0 if n == 0 else np.ones(self.grid.size)
        if k == N + 1:
            return terminal
        expected = self.transition(k, n).expect(self.date(k).inverse_numeraire)
        values = terminal * expected
        return float(values[0]) if n == 0 else values

    def today_expectation(self, n, values):
        return float(self.transition(n, 0).expect(values)[0])

    def validity_report(self, band=1.0):
        """
        Mapping diagnostics per date.

        Returns:
            Dict with monotonicity, terminal-bond range, martingale errors and
            the R² of log S_n(x) against x over |x| <= band·σ_{X_n}
        """
        rows = []
        for n in range(1, self.n_periods + 1):
            date = self.date(n)
            interior = slice(1, -1)
            increments = np.diff(date.swap_rate)[interior]
            positive = date.swap_rate > 0
            annuity_model = self.numeraire_today * self.today_expectation(n, date.numeraire_ratio)
            bond_model = self.reconstruct_bond(n, 0)
            central = np.abs(date.x) <= band * self.grid.stdevs[n - 1] + 1e-12
            log_rate = np.log(date.swap_rate[central])
            fitted = np.polyval(np.polyfit(date.x[central], log_rate, 1), date.x[central])
            rows.append({
                "date": n,
                "swap_rate_increasing": bool(np.all(increments > 0)),
                "numeraire_in_unit_interval": bool(np.all((date.numeraire_df[positive] > 0)
                                                          & (date.numeraire_df[positive] < 1))),
                "numeraire_decreasing": bool(np.all(np.diff(date.numeraire_df[positive]) < 0)),
                "annuity_error": abs(annuity_model / self.strip.annuities[n - 1] - 1.0),
                "bond_error": abs(bond_model / self.strip.discount_factors[n - 1] - 1.0),
                "log_linearity_r2": float(r2_score(log_rate, fitted)),
            })
        return {"dates": rows, "clamp_count": self.clamp_count}

    def to_dict(self):
        """Versioned plain-data dump of the mapped functional forms."""
        return {
            "version": DUMP_VERSION,
            "valuation_date": self.tenor.valuation_date.isoformat(),
            "dates": [d.isoformat() for d in self.tenor.dates],
            "frequency_months": self.tenor.frequency_months,
            "discount_factors": self.strip.discount_factors.tolist(),
            "model": self.model.describe(),
            "grid": self.grid_params() | {"prob_floor": self.prob_floor},
            "clamp_count": self.clamp_count,
            "mapped": [{
                "x": d.x.tolist(), "swap_rate": d.swap_rate.tolist(),
                "numeraire_ratio": d.numeraire_ratio.tolist(),
                "numeraire_df": d.numeraire_df.tolist(), "libor": d.libor.tolist(),
                "scaled_digital": d.scaled_digital.tolist(),
                "next_bond_ratio": d.next_bond_ratio.tolist(),
            } for d in self.dates],
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("version") != DUMP_VERSION:
            raise MarketDataError(f"Unsupported lattice dump version: {data.get('version')}")
        valuation = dt.date.fromisoformat(data["valuation_date"])
        dates = [dt.date.fromisoformat(d) for d in data["dates"]]
        tenor = TenorStructure(valuation, dates, data["frequency_months"])
        strip = CoterminalStrip(tenor, data["discount_factors"])
        grid = data["grid"]
        lattice = cls(strip, MappingModel.from_description(data["model"]),
                      grid["mean_reversion"], grid["steps_per_dev"], grid["deviations"],
                      grid["order"], grid["prob_floor"], build=False)
        lattice.clamp_count = data["clamp_count"]
        lattice.dates = [MappedDate(*(np.asarray(d[key]) for key in (
            "x", "numeraire_ratio", "swap_rate", "numeraire_df", "libor", "scaled_digital",
            "next_bond_ratio"))) for d in data["mapped"]]
        return lattice

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path, "r") as f:
            return cls.from_dict(json.load(f))


def european_spec(strip, n, strike, phi=1, notional=1.0):
    """Swaption spec for expiry n (1-based) of a co-terminal strip."""
    return SwaptionSpec(strip.tenor.times[n - 1], float(strip.forwards[n - 1]),
                        float(strip.annuities[n - 1]), strike, phi, notional)
