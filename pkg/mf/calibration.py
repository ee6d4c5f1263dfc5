"""
Smile calibration per expiry, market-model construction for the pricing cases,
and mean-reversion estimation from historical swap rates.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.optimize import brentq, least_squares

from mf.analytic import (
    VOL_LOWER,
    VOL_UPPER,
    SwaptionSpec,
    UVDDParams,
    black_european,
    implied_black_vol,
    price_bounds,
    uvdd_european,
)
from mf.driver import DriverSpec
from mf.errors import CalibrationWarning, MarketDataError, NoSolutionError
from mf.mapping import MappingModel, european_spec
from mf.market_data import smile_vol

logger = logging.getLogger(__name__)

QUOTE_OFFSETS_BP = tuple(range(-100, 101, 25))

CALIBRATION_CASES = {
    1: "black_atm",
    2: "lognormal",
    3: "dd",
    4: "uvdd",
    5: "uvdd_iv",
    6: "uvdd_bounded",
}

_START_SCALES = ((1.0, 2.0, 0.02), (0.8, 1.5, 0.01), (1.2, 3.0, 0.05))

MIN_HISTORY_RETURNS = 60


def adjust_sigma_to_atm(spec, black_vol, template):
    """
    UVDD parameters whose ATM price equals the Black ATM price.

    Args:
        spec: ATM SwaptionSpec (strike = forward)
        black_vol: Market ATM vol
        template: UVDDParams fixing m, ω ratios and weights

    Returns:
        UVDDParams with σ¹ solved on [VOL_LOWER, VOL_UPPER]
    """
    target = black_european(spec, black_vol)

    def gap(sigma1):
        return uvdd_european(spec, template.with_sigma1(sigma1)) - target

    try:
        sigma1 = brentq(gap, VOL_LOWER, VOL_UPPER, xtol=1e-14)
    except ValueError as exc:
        raise NoSolutionError(
            f"No σ¹ reproduces the ATM price at vol {black_vol:.4f} (m={template.m})"
        ) from exc
    return template.with_sigma1(sigma1)


def case_model(case, strip):
    """
    Mapping model for a pricing case on a strip with ATM vols.

    Args:
        case: Dict with kind 'black', or kind 'uvdd' plus m, omega and lam
            (lam = 1 gives a displaced diffusion)
        strip: CoterminalStrip carrying atm_vols

    Returns:
        MappingModel matching every ATM price of the strip
    """
    if strip.atm_vols is None:
        raise MarketDataError("Strip has no ATM vols")
    if case["kind"] == "black":
        return MappingModel.black(strip.atm_vols)
    lam = case.get("lam", 1.0)
    params = []
    for n, vol in enumerate(strip.atm_vols, start=1):
        spec = european_spec(strip, n, float(strip.forwards[n - 1]))
        if lam == 1.0:
            template = UVDDParams(case.get("m", 0.0), (vol,), (1.0,))
        else:
            template = UVDDParams.from_omega(vol, case.get("omega", 1.0), case.get("m", 0.0), lam)
        params.append(adjust_sigma_to_atm(spec, vol, template))
    return MappingModel.uvdd(params)


def quote_spec(expiry, forward, annuity, strike):
    # out-of-the-money side keeps price residuals comparable across strikes
    phi = 1 if strike >= forward else -1
    return SwaptionSpec(expiry, forward, annuity, strike, phi)


@dataclass
class CalibrationProblem:
    """Smile quotes for one expiry."""

    expiry: float
    forward: float
    annuity: float
    strikes: np.ndarray
    market_vols: np.ndarray
    atm_vol: float

    def __post_init__(self):
        self.strikes = np.asarray(self.strikes, dtype=float)
        self.market_vols = np.asarray(self.market_vols, dtype=float)
        if self.strikes.shape != self.market_vols.shape or self.strikes.size == 0:
            raise MarketDataError("Need one market vol per strike")
        if np.unique(self.strikes).size != self.strikes.size:
            raise MarketDataError(f"Duplicate strikes in quotes: {self.strikes.tolist()}")
        for strike, vol in zip(self.strikes, self.market_vols):
            if not np.isfinite(vol) or vol < 0:
                raise MarketDataError(f"Invalid market vol {vol} at strike {strike:.6f}")
            spec = self.spec(strike)
            price = black_european(spec, vol)
            intrinsic, upper = price_bounds(spec)
            if not intrinsic <= price <= upper:
                raise MarketDataError(
                    f"Quote at strike {strike:.6f} prices {price:.6g} outside "
                    f"[{intrinsic:.6g}, {upper:.6g}]"
                )

    def spec(self, strike):
        return quote_spec(self.expiry, self.forward, self.annuity, strike)

    @property
    def market_prices(self):
        return np.array([black_european(self.spec(k), v)
                         for k, v in zip(self.strikes, self.market_vols)])

    def model_vols(self, params):
        vols = []
        for strike in self.strikes:
            spec = self.spec(strike)
            try:
                vols.append(implied_black_vol(spec, uvdd_european(spec, params)))
            except NoSolutionError:
                vols.append(np.nan)
        return np.array(vols)


@dataclass
class CalibrationResult:
    case: int
    params: UVDDParams
    price_errors: np.ndarray
    vol_errors: np.ndarray
    converged: bool
    cost: float = 0.0
    starts: list = field(default_factory=list)

    @property
    def average_error(self):
        """Mean absolute relative price error."""
        return float(np.mean(np.abs(self.price_errors)))

    @property
    def average_vol_error(self):
        """Mean absolute implied-vol error in vol points."""
        return float(np.nanmean(np.abs(self.vol_errors)))


def residuals(problem, params, objective="price"):
    """
    Relative errors model/market − 1 per strike.

    Args:
        problem: CalibrationProblem
        params: UVDDParams
        objective: 'price' or 'vol'
    """
    if objective == "price":
        market = problem.market_prices
        if np.any(market <= 0):
            raise MarketDataError("Relative price errors need positive market prices")
        model = np.array([uvdd_european(problem.spec(k), params) for k in problem.strikes])
        return model / market - 1.0
    if objective == "vol":
        return problem.model_vols(params) / problem.market_vols - 1.0
    raise ValueError(f"Unknown objective: {objective}")


def to_unconstrained(params, case, m_bound=0.10):
    """(log σ¹, log σ², z) with z = log m, or log(h/m − 1) for the bounded case."""
    name = CALIBRATION_CASES[case]
    if name in ("black_atm", "lognormal"):
        return np.array([np.log(params.sigma1)])
    if name == "dd":
        return np.array([np.log(params.sigma1), np.log(params.m)])
    z = np.log(m_bound / params.m - 1.0) if name == "uvdd_bounded" else np.log(params.m)
    return np.array([np.log(params.sigma1), np.log(params.sigma2), z])


def from_unconstrained(theta, case, lam=0.75, m_bound=0.10):
    """Parameters from unconstrained coordinates: σ = e^x, m = e^z or h/(1 + e^z)."""
    name = CALIBRATION_CASES[case]
    if name in ("black_atm", "lognormal"):
        return UVDDParams.lognormal(np.exp(theta[0]))
    if name == "dd":
        return UVDDParams(np.exp(theta[1]), (np.exp(theta[0]),), (1.0,))
    sigma1, sigma2 = np.exp(theta[0]), np.exp(theta[1])
    m = m_bound / (1.0 + np.exp(theta[2])) if name == "uvdd_bounded" else np.exp(theta[2])
    return UVDDParams(m, (sigma1, sigma2), (lam, 1.0 - lam))


def _start_points(case, problem, lam, m_bound):
    # σ¹ = σ² = ATM vol with m = h_m/2 first, then spread starts
    name = CALIBRATION_CASES[case]
    atm, m_mid = problem.atm_vol, 0.5 * m_bound
    if name == "lognormal":
        points = [to_unconstrained(UVDDParams.lognormal(atm), case, m_bound)]
    elif name == "dd":
        points = [to_unconstrained(UVDDParams(m_mid, (atm,), (1.0,)), case, m_bound)]
    else:
        points = [to_unconstrained(UVDDParams.from_omega(atm, 1.0, m_mid, lam), case, m_bound)]
    for vol_scale, omega, m in _START_SCALES:
        if name == "uvdd_bounded":
            m = min(m, 0.5 * m_bound)
        dd_sigma = atm * vol_scale * problem.forward / (problem.forward + m)
        if name == "lognormal":
            params = UVDDParams.lognormal(atm * vol_scale)
        elif name == "dd":
            params = UVDDParams(m, (dd_sigma,), (1.0,))
        else:
            params = UVDDParams.from_omega(dd_sigma, omega, m, lam)
        points.append(to_unconstrained(params, case, m_bound))
    return points


def _errors(problem, params):
    return residuals(problem, params, "price"), 100.0 * (problem.model_vols(params)
                                                         - problem.market_vols)


def calibrate_expiry(problem, case, lam=0.75, m_bound=0.10, max_iterations=500):
    """
    Fit one expiry's smile for a calibration case.

    Case 1 keeps the Black ATM vol without fitting. Cases 2–4 and 6 minimize
    relative price errors, case 5 relative implied-vol errors. Levenberg–
    Marquardt runs in the unconstrained coordinates, first from
    σ¹ = σ² = ATM vol with m = m_bound/2, then from three spread starts, and
    keeps the cheapest; a CalibrationWarning flags a best-so-far answer.

    Args:
        max_iterations: Iteration budget per start; each iteration costs one
            evaluation plus one per parameter for the finite-difference Jacobian

    Returns:
        CalibrationResult with per-strike relative price errors and vol errors
    """
    if case not in CALIBRATION_CASES:
        raise ValueError(f"Unknown calibration case {case}")
    if problem.strikes.size < 3:
        raise MarketDataError("Calibration needs at least three quotes")
    if case == 1:
        params = UVDDParams.lognormal(problem.atm_vol)
        return CalibrationResult(case, params, *_errors(problem, params), True)

    objective = "vol" if CALIBRATION_CASES[case] == "uvdd_iv" else "price"

    def objective_fn(theta):
        gaps = residuals(problem, from_unconstrained(theta, case, lam, m_bound), objective)
        return np.nan_to_num(gaps, nan=1.0)

    best, starts = None, []
    for start in _start_points(case, problem, lam, m_bound):
        try:
            fit = least_squares(objective_fn, start, method="lm",
                                max_nfev=max_iterations * (start.size + 1),
                                xtol=1e-10, ftol=1e-12)
        except (ValueError, NoSolutionError) as exc:
            logger.debug("Start %s failed: %s", start, exc)
            continue
        starts.append({"start": start.tolist(), "cost": float(fit.cost), "status": int(fit.status)})
        if best is None or fit.cost < best.cost:
            best = fit
    if best is None:
        raise NoSolutionError(f"Calibration case {case} failed from every start")

    converged = best.status > 0
    if not converged:
        warnings.warn(f"Calibration case {case} did not converge; returning best-so-far",
                      CalibrationWarning)
    params = from_unconstrained(best.x, case, lam, m_bound)
    price_errors, vol_errors = _errors(problem, params)
    logger.debug("Case %d at T=%.2f: %s, avg error %.6f", case, problem.expiry,
                 params.as_dict(), float(np.mean(np.abs(price_errors))))
    return CalibrationResult(case, params, price_errors, vol_errors, converged,
                             float(best.cost), starts)


def synthetic_quotes(forward, expiry, annuity, params, offsets_bp=QUOTE_OFFSETS_BP):
    """Smile quotes generated by a UVDD model at ATM + offsets."""
    strikes = forward + np.asarray(offsets_bp, dtype=float) * 1e-4
    if np.any(strikes <= 0):
        raise MarketDataError("Quote offsets reach non-positive strikes")
    vols = []
    for strike in strikes:
        spec = quote_spec(expiry, forward, annuity, strike)
        vols.append(implied_black_vol(spec, uvdd_european(spec, params)))
    atm_spec = SwaptionSpec(expiry, forward, annuity, forward)
    atm_vol = implied_black_vol(atm_spec, uvdd_european(atm_spec, params))
    return CalibrationProblem(expiry, forward, annuity, strikes, vols, atm_vol)


def quotes_from_cube(strip, n, surface, cube, offsets_bp=QUOTE_OFFSETS_BP):
    """Smile quotes for expiry n read from an ATM surface and ratio cube."""
    tenor = strip.tenor
    expiry_day = tenor.day_offsets[n - 1]
    tenor_day = tenor.vol_tenor_day(n)
    forward = float(strip.forwards[n - 1])
    vols = [smile_vol(cube, surface, expiry_day, tenor_day, offset) for offset in offsets_bp]
    strikes = forward + np.asarray(offsets_bp, dtype=float) * 1e-4
    return CalibrationProblem(tenor.times[n - 1], forward, float(strip.annuities[n - 1]),
                              strikes, vols, surface.atm_vol(expiry_day, tenor_day))


def calibrate_strip(problems, case, **kwargs):
    """Calibrate every expiry and assemble the mapping model."""
    results = [calibrate_expiry(problem, case, **kwargs) for problem in problems]
    if case == 1:
        return MappingModel.black([r.params.sigma1 for r in results]), results
    return MappingModel.uvdd([r.params for r in results]), results


def compare_cases(problems, cases=tuple(CALIBRATION_CASES), **kwargs):
    """
    Average absolute relative price error per case and expiry.

    Returns:
        (errors DataFrame indexed by expiry with one column per case,
         report DataFrame with fitted parameters per case and expiry)
    """
    errors, report = {}, []
    for case in cases:
        column = []
        for n, problem in enumerate(problems, start=1):
            result = calibrate_expiry(problem, case, **kwargs)
            column.append(result.average_error)
            report.append({"case": case, "name": CALIBRATION_CASES[case], "expiry": n,
                           **result.params.as_dict(), "average_error": result.average_error,
                           "converged": result.converged})
        errors[CALIBRATION_CASES[case]] = column
        logger.info("Calibration case %d (%s): mean relative price error %.6f", case,
                    CALIBRATION_CASES[case], float(np.mean(column)))
    frame = pd.DataFrame(errors, index=pd.RangeIndex(1, len(problems) + 1, name="expiry"))
    return frame, pd.DataFrame(report)


def model_correlation(mean_reversion, times):
    """
    Swap-rate log-return correlations implied by the driver's mean reversion.

    Corr(n, k) = autocorrelation(T_n, T_k) / sqrt(T_n / T_k) for T_n <= T_k.
    """
    driver = DriverSpec(mean_reversion, ())
    times = np.asarray(times, dtype=float)
    size = times.size
    corr = np.eye(size)
    for i in range(size):
        for j in range(i + 1, size):
            value = driver.autocorrelation(times[i], times[j]) / np.sqrt(times[i] / times[j])
            corr[i, j] = corr[j, i] = value
    return corr


def simulate_rate_histories(mean_reversion, times, days, seed=0, initial=0.05, daily_vol=0.01,
                            start=None):
    """
    Daily swap-rate paths with the model's implied return correlation.

    Returns:
        DataFrame with one column per expiry time
    """
    rng = np.random.default_rng(seed)
    corr = model_correlation(mean_reversion, times)
    returns = rng.multivariate_normal(np.zeros(len(times)), daily_vol ** 2 * corr, size=days)
    levels = initial * np.exp(np.cumsum(returns, axis=0))
    index = pd.RangeIndex(days, name="day") if start is None else pd.bdate_range(start, periods=days)
    return pd.DataFrame(levels, index=index, columns=[f"T{t:g}" for t in times])


@dataclass
class MeanReversionEstimate:
    mean_reversion: float
    sample_correlation: np.ndarray
    targets: np.ndarray
    fitted: np.ndarray
    caveats: tuple = (
        "daily returns stand in for instantaneous correlation",
        "measure change between forward measures is ignored",
        "spot-starting rates stand in for forward-starting rates",
    )


def estimate_mean_reversion(histories, times, initial_guess=0.05):
    """
    Least-squares mean reversion from historical rate correlations.

    Each pair T_n < T_k contributes the target ρ̂·sqrt(T_n/T_k), matched by
    sqrt(expm1(2aT_n)/expm1(2aT_k)).

    Args:
        histories: DataFrame of rate levels, one column per time
        times: Expiry times in years matching the columns

    Raises:
        MarketDataError: fewer than two series or 60 daily returns, missing or
            non-positive levels, or a constant series
    """
    times = np.asarray(times, dtype=float)
    if histories.shape[1] != times.size:
        raise MarketDataError("Need one rate history per expiry time")
    if times.size < 2:
        raise MarketDataError("Need at least two rate histories")
    levels = histories.to_numpy(dtype=float)
    if np.any(~np.isfinite(levels) | (levels <= 0)):
        raise MarketDataError("Rate histories need positive levels on every shared date")
    returns = np.diff(np.log(levels), axis=0)
    if returns.shape[0] < MIN_HISTORY_RETURNS:
        raise MarketDataError(
            f"Need at least {MIN_HISTORY_RETURNS} daily returns, got {returns.shape[0]}"
        )
    flat = [str(c) for c, std in zip(histories.columns, returns.std(axis=0)) if std == 0]
    if flat:
        raise MarketDataError(f"Constant rate history leaves correlation undefined: {flat}")
    sample = np.corrcoef(returns, rowvar=False)
    pairs = [(i, j) for i in range(times.size) for j in range(i + 1, times.size)]
    targets = np.array([sample[i, j] * np.sqrt(times[i] / times[j]) for i, j in pairs])

    def model(a):
        driver = DriverSpec(float(a), ())
        return np.array([driver.autocorrelation(times[i], times[j]) for i, j in pairs])

    fit = least_squares(lambda theta: model(theta[0]) - targets, [initial_guess], method="lm")
    if fit.status <= 0:
        warnings.warn("Mean-reversion fit did not converge", CalibrationWarning)
    estimate = float(fit.x[0])
    logger.info("Estimated mean reversion %.4f from %d pairs", estimate, len(pairs))
    return MeanReversionEstimate(estimate, sample, targets, model(estimate))
