"""The one-factor Gaussian driver dX = e^{at} dW and its lattice grids."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DriverSpec:
    """Mean reversion a and reset times T_1..T_{N+1} (year fractions)."""

    mean_reversion: float
    times: tuple = field(default=())

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        object.__setattr__(self, "times", times)
        if any(t <= 0 for t in times):
            raise ValueError("Reset times must be positive")
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise ValueError("Reset times must be strictly increasing")

    def variance(self, t, s):
        """∫_t^s e^{2au} du."""
        if t < 0 or s < t:
            raise ValueError(f"Need 0 <= t <= s, got t={t}, s={s}")
        a = self.mean_reversion
        if a == 0:
            return s - t
        return np.exp(2.0 * a * t) * np.expm1(2.0 * a * (s - t)) / (2.0 * a)

    def stdev(self, t, s):
        return float(np.sqrt(self.variance(t, s)))

    def conditional_density(self, s, t, x_t):
        """Normal parameters (mean, variance) of X(s) given X(t) = x_t."""
        if t >= s:
            raise ValueError(f"Conditioning time {t} must precede {s}")
        return x_t, self.variance(t, s)

    def autocorrelation(self, t, s):
        """Corr(X(t), X(s)) for 0 < t <= s."""
        if t <= 0 or s < t:
            raise ValueError(f"Need 0 < t <= s, got t={t}, s={s}")
        a = self.mean_reversion
        if a == 0:
            return float(np.sqrt(t / s))
        return float(np.sqrt(np.expm1(2.0 * a * t) / np.expm1(2.0 * a * s)))

    def build_grid(self, steps_per_dev, deviations):
        """Symmetric grid of 2·steps·deviations + 1 nodes per reset date."""
        if steps_per_dev < 1 or deviations < 1:
            raise ValueError("steps_per_dev and deviations must be positive")
        half = steps_per_dev * deviations
        offsets = np.arange(-half, half + 1, dtype=float)
        stdevs = np.array([self.stdev(0.0, t) for t in self.times])
        spacings = stdevs / steps_per_dev
        nodes = [offsets * spacing for spacing in spacings]
        return LatticeGrid(steps_per_dev, deviations, nodes, spacings, stdevs)


@dataclass
class LatticeGrid:
    """Per-date grids x_n ∈ {−MΔ_n, …, MΔ_n} with Δ_n = σ_{X_n} / steps_per_dev."""

    steps_per_dev: int
    deviations: int
    nodes: list
    spacings: np.ndarray
    stdevs: np.ndarray

    @property
    def size(self):
        return 2 * self.steps_per_dev * self.deviations + 1

    def center(self):
        return self.steps_per_dev * self.deviations
