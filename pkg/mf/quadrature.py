"""
Integration of grid-sampled functions against normal densities.

Functions known only on a grid are replaced, interval by interval, by the
local polynomial through a stencil of neighbouring nodes (Neville's
recurrence on the coefficients). Each monomial is then integrated exactly
against the Gaussian with the partial-moment recurrence

    G(k; h) = μ G(k−1) + (k−1) σ² G(k−2) − σ² h^(k−1) p(h),

where p is the normal density. Outside the grid the function is extended
flat at its boundary value. Payoffs of the form max(a, b) are integrated
by splitting the interval that contains the crossover of a and b.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

logger = logging.getLogger(__name__)

_SQRT_2PI = np.sqrt(2.0 * np.pi)
_CROSSOVER_TOL = 1e-12


def neville_coeffs(x, f):
    """
    Monomial coefficients of the interpolating polynomial through (x_i, f_i).

    Args:
        x: M+1 distinct abscissae
        f: Values, shape (M+1,) or (M+1, ...) for several right-hand sides

    Returns:
        Coefficients c_0..c_M (ascending powers), shape like f
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    n = x.size
    if f.shape[0] != n:
        raise ValueError("x and f must have the same leading length")
    if np.unique(x).size != n:
        raise ValueError("Abscissae must be distinct")

    table = []
    for i in range(n):
        coeffs = np.zeros((n,) + f.shape[1:])
        coeffs[0] = f[i]
        table.append(coeffs)

    for span in range(1, n):
        for i in range(n - span):
            lower, upper = table[i], table[i + 1]
            shifted_lower = np.zeros_like(lower)
            shifted_lower[1:] = lower[:-1]
            shifted_upper = np.zeros_like(upper)
            shifted_upper[1:] = upper[:-1]
            table[i] = (shifted_lower - x[i + span] * lower - shifted_upper + x[i] * upper) / (
                x[i] - x[i + span]
            )
    return table[0]


def gaussian_partial_moments(kmax, h, mu, sigma):
    """
    G(k; h, μ, σ) = ∫_{−∞}^{h} x^k N(x; μ, σ²) dx for k = 0..kmax.

    h and mu broadcast against each other; h may be ±inf.

    Returns:
        Array of shape (kmax + 1,) + broadcast shape
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    h, mu = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(mu, dtype=float))
    finite = np.isfinite(h)
    h_finite = np.where(finite, h, 0.0)
    z = np.where(finite, (h_finite - mu) / sigma, h)
    # σ² p(h) with p the N(μ, σ²) density
    boundary = np.where(finite, sigma * np.exp(-0.5 * np.where(finite, z, 0.0) ** 2) / _SQRT_2PI, 0.0)

    moments = np.empty((kmax + 1,) + h.shape)
    moments[0] = ndtr(z)
    previous = np.zeros(h.shape)
    power = np.ones(h.shape)
    for k in range(1, kmax + 1):
        moments[k] = mu * moments[k - 1] + (k - 1) * sigma ** 2 * previous - power * boundary
        previous = moments[k - 1]
        power = power * h_finite
    return moments


def gaussian_partial_moment(k, h, mu, sigma):
    """Single G(k; h, μ, σ); G(−1) = 0."""
    if k < -1:
        raise ValueError("k must be >= -1")
    if k == -1:
        return 0.0 * np.asarray(h, dtype=float)
    out = gaussian_partial_moments(k, h, mu, sigma)[k]
    return float(out) if out.ndim == 0 else out


def segment_moments(order, left, right, origin, mu, sigma):
    """
    ∫_left^right (x − origin)^k N(x; μ, σ²) dx for k = 0..order.

    Segments lying right of the mean are evaluated on the reflected axis so
    upper-tail pieces keep their relative accuracy.
    """
    left, right, origin, mu = np.broadcast_arrays(*(np.asarray(v, dtype=float)
                                                    for v in (left, right, origin, mu)))
    direct = (gaussian_partial_moments(order, right - origin, mu - origin, sigma)
              - gaussian_partial_moments(order, left - origin, mu - origin, sigma))
    signs = (-1.0) ** np.arange(order + 1)
    signs = signs.reshape((order + 1,) + (1,) * left.ndim)
    reflected = signs * (gaussian_partial_moments(order, origin - left, origin - mu, sigma)
                         - gaussian_partial_moments(order, origin - right, origin - mu, sigma))
    return np.where(left >= mu, reflected, direct)


@dataclass
class PiecewisePoly:
    """Local polynomials in u = x − x_j on each grid interval [x_j, x_{j+1}]."""

    breakpoints: np.ndarray
    coeffs: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        j = np.clip(np.searchsorted(self.breakpoints, x, side="right") - 1,
                    0, self.breakpoints.size - 2)
        u = x - self.breakpoints[j]
        c = self.coeffs[j]
        out = np.zeros_like(u)
        for k in range(c.shape[-1] - 1, -1, -1):
            out = out * u + c[..., k]
        return out


class GridInterpolant:
    """Stencil bookkeeping for order-M local polynomial fits on a fixed grid."""

    def __init__(self, x, order=3):
        x = np.asarray(x, dtype=float)
        if np.any(np.diff(x) <= 0):
            raise ValueError("Grid must be strictly increasing")
        if x.size < order + 1:
            raise ValueError(f"Need at least {order + 1} grid points for order {order}")
        self.x = x
        self.order = order
        n_intervals = x.size - 1
        # Window starts at j − M//2 and is shifted inward at the grid edges
        starts = np.clip(np.arange(n_intervals) - order // 2, 0, x.size - 1 - order)
        self.stencil = starts[:, None] + np.arange(order + 1)[None, :]
        local = x[self.stencil] - x[:-1, None]
        identity = np.eye(order + 1)
        self.basis = np.stack([neville_coeffs(local[j], identity) for j in range(n_intervals)])

    def coefficients(self, values):
        """Per-interval coefficients, shape (J−1, M+1) + trailing dims of values."""
        values = np.asarray(values, dtype=float)
        return np.einsum("jkm,jm...->jk...", self.basis, values[self.stencil])

    def fit(self, values):
        return PiecewisePoly(self.x, self.coefficients(values))


def _poly_eval(coeffs, u):
    out = 0.0
    for c in coeffs[::-1]:
        out = out * u + c
    return out


def _bisect_root(diff_coeffs, width, sign_left):
    """Root of a local polynomial on (0, width) given its sign at 0."""
    low, high = 0.0, width
    while high - low > _CROSSOVER_TOL:
        mid = 0.5 * (low + high)
        if np.sign(_poly_eval(diff_coeffs, mid)) == sign_left:
            low = mid
        else:
            high = mid
    return 0.5 * (low + high)


def _count_roots(diff_coeffs, width):
    roots = np.roots(diff_coeffs[::-1]) if np.any(diff_coeffs[1:] != 0) else np.array([])
    real = roots[np.abs(roots.imag) < 1e-12].real
    return int(np.sum((real > 0) & (real < width)))


class GaussianTransition:
    """
    Expectations of grid functions under N(mean_i, σ²) for a set of target means.

    Moments of every grid interval are computed once per (grid, means, σ)
    and reused for every function integrated against them.
    """

    def __init__(self, x, means, sigma, order=3):
        """
        Initialize transition.

        Args:
            x: Source grid (strictly increasing)
            means: Target means, one per output value
            sigma: Common standard deviation
            order: Local polynomial order M
        """
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.interp = GridInterpolant(x, order)
        self.x = self.interp.x
        self.means = np.atleast_1d(np.asarray(means, dtype=float))
        self.sigma = float(sigma)
        self.order = order

        left = self.x[:-1][None, :]
        right = self.x[1:][None, :]
        moments = segment_moments(order, left, right, left, self.means[:, None], self.sigma)
        self.weights = np.moveaxis(moments, 0, -1)
        self.left_tail = ndtr((self.x[0] - self.means) / self.sigma)
        self.right_tail = ndtr((self.means - self.x[-1]) / self.sigma)

        contrib = np.einsum("ijk,jkm->ijm", self.weights, self.interp.basis)
        operator = np.zeros((self.means.size, self.x.size))
        rows = np.arange(self.means.size)[:, None]
        for m in range(order + 1):
            np.add.at(operator, (rows, self.interp.stencil[None, :, m]), contrib[:, :, m])
        operator[:, 0] += self.left_tail
        operator[:, -1] += self.right_tail
        self.operator = operator

    def expect(self, values):
        """E[f(X)] per target mean, f given on the source grid."""
        return self.operator @ np.asarray(values, dtype=float)

    def cumulative(self, values):
        """
        Lower and upper partial expectations at every grid node (single target).

        Returns:
            (lower, upper) with lower[i] = E[f; X ≤ x_i], upper[i] = E[f; X > x_i]
        """
        if self.means.size != 1:
            raise ValueError("Cumulative integrals need a single target mean")
        values = np.asarray(values, dtype=float)
        coeffs = self.interp.coefficients(values)
        pieces = np.einsum("jk,jk->j", self.weights[0], coeffs)
        lower = self.left_tail[0] * values[0] + np.concatenate(([0.0], np.cumsum(pieces)))
        upper = self.right_tail[0] * values[-1] + np.concatenate(
            (np.cumsum(pieces[::-1])[::-1], [0.0])
        )
        return lower, upper

    def expect_max(self, first, second):
        """
        E[max(first, second)(X)] with both branches fitted separately.

        Intervals where the branches cross are split at the crossover, and
        each side is integrated with the larger branch. Equal values count
        as second.
        """
        first = np.asarray(first, dtype=float)
        second = np.asarray(second, dtype=float)
        coeffs_a = self.interp.coefficients(first)
        coeffs_b = self.interp.coefficients(second)
        gap = first - second
        gap_left, gap_right = gap[:-1], gap[1:]

        use_first = (gap_left >= 0) & (gap_right >= 0) & ((gap_left > 0) | (gap_right > 0))
        crossing = gap_left * gap_right < 0
        chosen = np.where(use_first[:, None], coeffs_a, coeffs_b)
        chosen[crossing] = 0.0
        total = np.einsum("ijk,jk->i", self.weights, chosen)

        total += self.left_tail * max(first[0], second[0])
        total += self.right_tail * max(first[-1], second[-1])

        for j in np.flatnonzero(crossing):
            total += self._split_interval(j, coeffs_a[j], coeffs_b[j], gap_left[j] > 0)
        return total

    def _split_interval(self, j, coeffs_a, coeffs_b, first_on_left):
        width = self.x[j + 1] - self.x[j]
        diff = coeffs_a - coeffs_b
        if _count_roots(diff, width) > 1:
            logger.warning("More than one crossover in interval %d; splitting at the first", j)
        cross = _bisect_root(diff, width, 1.0 if first_on_left else -1.0)
        left_coeffs, right_coeffs = (coeffs_a, coeffs_b) if first_on_left else (coeffs_b, coeffs_a)
        origin = self.x[j]
        left_part = segment_moments(self.order, origin, origin + cross, origin, self.means, self.sigma)
        right_part = segment_moments(self.order, origin + cross, self.x[j + 1], origin,
                                     self.means, self.sigma)
        return left_coeffs @ left_part + right_coeffs @ right_part


def integrate_grid_function(x, values, mu, sigma, order=3):
    """E[f(X)] for X ~ N(μ, σ²), f sampled on grid x and extended flat outside it."""
    return float(GaussianTransition(x, [mu], sigma, order).expect(values)[0])


def find_crossover(x, first, second, order=3):
    """Crossover points of two grid functions, one per sign-changing interval."""
    interp = GridInterpolant(x, order)
    gap = np.asarray(first, dtype=float) - np.asarray(second, dtype=float)
    diff = interp.coefficients(gap)
    points = []
    for j in np.flatnonzero(gap[:-1] * gap[1:] < 0):
        width = interp.x[j + 1] - interp.x[j]
        points.append(interp.x[j] + _bisect_root(diff[j], width, np.sign(gap[j])))
    return points


def integrate_with_kink(x, f_left, f_right, crossover, mu, sigma, order=3):
    """
    E[g(X)] where g follows f_left below the crossover and f_right above it.

    Each branch gets its own polynomial fit; the interval containing the
    crossover is split there.
    """
    interp = GridInterpolant(x, order)
    x = interp.x
    if not x[0] <= crossover <= x[-1]:
        raise ValueError(f"Crossover {crossover} outside grid [{x[0]}, {x[-1]}]")
    coeffs_left = interp.coefficients(f_left)
    coeffs_right = interp.coefficients(f_right)
    j_cross = int(np.clip(np.searchsorted(x, crossover, side="right") - 1, 0, x.size - 2))

    left = x[:-1]
    right = x[1:]
    weights = np.moveaxis(segment_moments(order, left, right, left, mu, sigma), 0, -1)
    total = 0.0
    for j in range(x.size - 1):
        if j < j_cross:
            total += weights[j] @ coeffs_left[j]
        elif j > j_cross:
            total += weights[j] @ coeffs_right[j]
        else:
            split = segment_moments(order, x[j], crossover, x[j], mu, sigma)
            rest = segment_moments(order, crossover, x[j + 1], x[j], mu, sigma)
            total += coeffs_left[j] @ split + coeffs_right[j] @ rest
    total += ndtr((x[0] - mu) / sigma) * np.asarray(f_left, dtype=float)[0]
    total += ndtr((mu - x[-1]) / sigma) * np.asarray(f_right, dtype=float)[-1]
    return float(total)
