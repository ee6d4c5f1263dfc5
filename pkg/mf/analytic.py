"""Closed-form Black, displaced-diffusion and UVDD swaption pricers."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from mf.errors import NoSolutionError

logger = logging.getLogger(__name__)

VOL_LOWER = 1e-6
VOL_UPPER = 5.0
_SQRT_2PI = np.sqrt(2.0 * np.pi)


def _pdf(z):
    return np.exp(-0.5 * z * z) / _SQRT_2PI


@dataclass(frozen=True)
class SwaptionSpec:
    """European swaption on a forward swap rate under its annuity measure."""

    expiry: float
    forward: float
    annuity: float
    strike: float
    phi: int = 1
    notional: float = 1.0

    def __post_init__(self):
        if self.expiry <= 0:
            raise ValueError("expiry must be positive")
        if self.annuity <= 0:
            raise ValueError("annuity must be positive")
        if self.notional < 0:
            raise ValueError("notional must be non-negative")
        if self.phi not in (1, -1):
            raise ValueError("phi must be +1 (payer) or -1 (receiver)")

    @property
    def scale(self):
        return self.annuity * self.notional

    def with_strike(self, strike):
        return SwaptionSpec(self.expiry, self.forward, self.annuity, strike, self.phi, self.notional)


@dataclass(frozen=True)
class UVDDParams:
    """
    Displaced lognormal mixture: S + m is a weights-mixture of lognormals with vols sigmas.

    The two-component case carries sigmas (σ¹, ω·σ¹) and weights (λ, 1−λ).
    """

    m: float
    sigmas: tuple
    weights: tuple

    def __post_init__(self):
        sigmas = tuple(float(s) for s in self.sigmas)
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "weights", weights)
        if len(sigmas) == 0 or len(sigmas) != len(weights):
            raise ValueError("sigmas and weights must be non-empty and of equal length")
        if any(s <= 0 for s in sigmas):
            raise ValueError("component vols must be positive")
        if any(w < 0 or w > 1 for w in weights) or abs(sum(weights) - 1.0) > 1e-12:
            raise ValueError("weights must lie in [0, 1] and sum to 1")
        if self.m < 0:
            logger.debug("Negative displacement m=%.4f in use", self.m)

    @classmethod
    def from_omega(cls, sigma, omega=1.0, m=0.0, lam=1.0):
        return cls(m, (sigma, omega * sigma), (lam, 1.0 - lam))

    @classmethod
    def lognormal(cls, sigma):
        return cls(0.0, (sigma,), (1.0,))

    @property
    def sigma1(self):
        return self.sigmas[0]

    @property
    def sigma2(self):
        return self.sigmas[1] if len(self.sigmas) > 1 else self.sigmas[0]

    @property
    def lam(self):
        return self.weights[0]

    @property
    def omega(self):
        return self.sigma2 / self.sigma1

    def with_sigma1(self, sigma1):
        """Same ω ratios, m and weights with the first vol set to sigma1."""
        scale = sigma1 / self.sigma1
        return UVDDParams(self.m, tuple(s * scale for s in self.sigmas), self.weights)

    def as_dict(self):
        return {"sigma1": self.sigma1, "sigma2": self.sigma2, "omega": self.omega,
                "m": self.m, "lambda": self.lam}


def _check_positive(forward, strike):
    if np.any(np.asarray(forward) <= 0) or np.any(np.asarray(strike) <= 0):
        raise ValueError("Forward and strike must be positive (after displacement)")


def _black_undiscounted(forward, strike, total_vol, phi):
    """φ(F Φ(φd₊) − K Φ(φd₋)) per unit annuity; intrinsic when total_vol is 0."""
    intrinsic = np.maximum(phi * (forward - strike), 0.0)
    if total_vol <= 0:
        return intrinsic
    d_plus = (np.log(forward / strike) + 0.5 * total_vol ** 2) / total_vol
    d_minus = d_plus - total_vol
    return phi * (forward * ndtr(phi * d_plus) - strike * ndtr(phi * d_minus))


def _black_digital_undiscounted(forward, strike, total_vol, phi):
    """Probability that the rate ends beyond the strike in the φ direction."""
    if total_vol <= 0:
        return np.where(phi * (forward - strike) > 0, 1.0, 0.0)
    d_minus = (np.log(forward / strike) - 0.5 * total_vol ** 2) / total_vol
    return ndtr(phi * d_minus)


def black_european(spec, vol):
    """Black swaption value in currency."""
    if vol < 0:
        raise ValueError("vol must be non-negative")
    _check_positive(spec.forward, spec.strike)
    return float(spec.scale * _black_undiscounted(spec.forward, spec.strike,
                                                  vol * np.sqrt(spec.expiry), spec.phi))


def black_digital(spec, vol):
    """Digital swaption paying the annuity; receiver pays when S < K, payer when S > K."""
    if vol < 0:
        raise ValueError("vol must be non-negative")
    _check_positive(spec.forward, spec.strike)
    return float(spec.scale * _black_digital_undiscounted(spec.forward, spec.strike,
                                                          vol * np.sqrt(spec.expiry), spec.phi))


def dd_european(spec, m, sigma):
    """Displaced diffusion: Black on (S + m, K + m)."""
    _check_positive(spec.forward + m, spec.strike + m)
    return float(spec.scale * _black_undiscounted(spec.forward + m, spec.strike + m,
                                                  sigma * np.sqrt(spec.expiry), spec.phi))


def dd_digital(spec, m, sigma):
    _check_positive(spec.forward + m, spec.strike + m)
    return float(spec.scale * _black_digital_undiscounted(spec.forward + m, spec.strike + m,
                                                          sigma * np.sqrt(spec.expiry), spec.phi))


def uvdd_european(spec, params):
    """Weighted sum of displaced-Black component values."""
    return float(sum(w * dd_european(spec, params.m, s)
                     for s, w in zip(params.sigmas, params.weights) if w > 0))


def uvdd_digital(spec, params):
    return float(sum(w * dd_digital(spec, params.m, s)
                     for s, w in zip(params.sigmas, params.weights) if w > 0))


def black_vega(spec, vol):
    """∂(black_european)/∂σ at any strike."""
    _check_positive(spec.forward, spec.strike)
    sqrt_t = np.sqrt(spec.expiry)
    if vol <= 0:
        return 0.0
    d_plus = (np.log(spec.forward / spec.strike) + 0.5 * vol * vol * spec.expiry) / (vol * sqrt_t)
    return float(spec.scale * spec.forward * _pdf(d_plus) * sqrt_t)


def _require_atm(spec):
    if abs(spec.strike - spec.forward) > 1e-12 * max(1.0, abs(spec.forward)):
        raise ValueError("ATM vega formula requires strike equal to the forward")


def black_atm_vega(spec, vol):
    """ATM vega P·S·φ(d₊)·√T."""
    _require_atm(spec)
    return black_vega(spec, vol)


def uvdd_vega_sigma1(spec, params):
    """
    ATM vega with respect to σ¹ with ω ratios held fixed,
    P·(S+m)·Σ λⁱ φ(½σⁱ√T)·(σⁱ/σ¹)·√T.
    """
    _require_atm(spec)
    shifted = spec.forward + params.m
    _check_positive(shifted, shifted)
    sqrt_t = np.sqrt(spec.expiry)
    total = 0.0
    for sigma, weight in zip(params.sigmas, params.weights):
        total += weight * _pdf(0.5 * sigma * sqrt_t) * sigma / params.sigma1
    return float(spec.scale * shifted * total * sqrt_t)


def uvdd_terminal_cdf(params, forward, expiry, level):
    """Probability that the terminal rate ends at or below level."""
    scalar = np.ndim(level) == 0
    shifted = np.atleast_1d(np.asarray(level, dtype=float)) + params.m
    out = np.zeros_like(shifted)
    positive = shifted > 0
    sqrt_t = np.sqrt(expiry)
    for sigma, weight in zip(params.sigmas, params.weights):
        z = (np.log(shifted[positive] / (forward + params.m)) + 0.5 * sigma * sigma * expiry)
        out[positive] += weight * ndtr(z / (sigma * sqrt_t))
    return float(out[0]) if scalar else out


def uvdd_terminal_density(params, forward, expiry, level):
    """Mixture of displaced-lognormal densities; zero at or below −m."""
    scalar = np.ndim(level) == 0
    shifted = np.atleast_1d(np.asarray(level, dtype=float)) + params.m
    out = np.zeros_like(shifted)
    positive = shifted > 0
    sqrt_t = np.sqrt(expiry)
    y = shifted[positive]
    for sigma, weight in zip(params.sigmas, params.weights):
        total_vol = sigma * sqrt_t
        z = (np.log(y / (forward + params.m)) + 0.5 * total_vol ** 2) / total_vol
        out[positive] += weight * _pdf(z) / (y * total_vol)
    return float(out[0]) if scalar else out


def price_bounds(spec):
    """No-arbitrage (intrinsic, upper) bounds of a European price."""
    intrinsic = spec.scale * max(spec.phi * (spec.forward - spec.strike), 0.0)
    upper = spec.scale * (spec.forward if spec.phi == 1 else spec.strike)
    return intrinsic, upper


def implied_black_vol(spec, price, tol=1e-10, bisection_steps=40, max_newton=50):
    """
    Black vol reproducing a price.

    Bisection on [VOL_LOWER, VOL_UPPER] narrows the bracket, Newton steps
    inside the bracket polish to |error| < tol·P·notional.

    Returns:
        Implied vol; 0.0 when the price equals intrinsic value
    """
    intrinsic, upper = price_bounds(spec)
    abs_tol = tol * spec.scale
    if price < intrinsic - abs_tol or price >= upper:
        raise NoSolutionError(
            f"Price {price:.6g} outside no-arbitrage bounds [{intrinsic:.6g}, {upper:.6g})"
        )
    if price <= intrinsic + abs_tol or price <= black_european(spec, VOL_LOWER):
        logger.debug("Implied vol at lower bound for strike %.6f", spec.strike)
        return 0.0
    if price > black_european(spec, VOL_UPPER):
        raise NoSolutionError(f"Price {price:.6g} needs a vol above {VOL_UPPER}")

    low, high = VOL_LOWER, VOL_UPPER
    for _ in range(bisection_steps):
        mid = 0.5 * (low + high)
        if black_european(spec, mid) < price:
            low = mid
        else:
            high = mid
        if high - low < 1e-4:
            break

    vol = 0.5 * (low + high)
    for _ in range(max_newton):
        diff = black_european(spec, vol) - price
        if abs(diff) < abs_tol:
            return vol
        if diff < 0:
            low = vol
        else:
            high = vol
        vega = black_vega(spec, vol)
        step = vol - diff / vega if vega > 0 else 0.5 * (low + high)
        vol = step if low < step < high else 0.5 * (low + high)
    return vol


def uvdd_implied_vol(spec, params):
    """Black implied vol of the UVDD price."""
    return implied_black_vol(spec, uvdd_european(spec, params))
