"""Three-state discrete lattice for hand-checkable Bermudan roll-backs."""

from dataclasses import dataclass

import numpy as np

from mf.pricing import backward_induction


@dataclass(frozen=True)
class ToyTree:
    """
    LIBOR fixings on a recombining three-state tree with uniform 1/3 transitions.

    Every node of date n reaches every node of date n+1. Period payments are
    unit-accrual and discounted one period at the fixing of the node.
    """

    spot_libor: float
    libors: tuple
    notional: float = 10000.0

    def __post_init__(self):
        libors = tuple(np.asarray(level, dtype=float) for level in self.libors)
        object.__setattr__(self, "libors", libors)
        if any(level.shape != libors[0].shape for level in libors):
            raise ValueError("Every date needs the same number of states")

    @property
    def n_dates(self):
        return len(self.libors)

    def libor(self, n):
        """Fixings on date n; date 0 is the single spot state."""
        return np.array([self.spot_libor]) if n == 0 else self.libors[n - 1]

    def expect(self, n, values):
        """Discounted one-period expectation from date n to each state of date n−1."""
        return np.mean(values) / (1.0 + self.libor(n - 1))


def base_tree():
    return ToyTree(0.055, ((0.07, 0.055, 0.04), (0.08, 0.06, 0.04)))


def fat_tail_tree():
    """Outer states pushed 5bp further out on both dates."""
    return ToyTree(0.055, ((0.0705, 0.055, 0.0395), (0.0805, 0.06, 0.0395)))


def skewed_tail_tree():
    """Fat tails as in fat_tail_tree with the middle state shifted to keep forwards."""
    return ToyTree(0.055, ((0.0705, 0.056, 0.0395), (0.0805, 0.059, 0.0395)))


FIXTURE_TREES = {"base": base_tree, "A": fat_tail_tree, "B": skewed_tail_tree}


def toy_swap_value(tree, strike):
    """
    Payer swap values per state for every date, paying N(L_n − K) per period.

    Returns:
        {n: swap value array on date n}
    """
    values = {}
    following = None
    for n in range(tree.n_dates, 0, -1):
        coupon = tree.notional * (tree.libor(n) - strike)
        values[n] = coupon if following is None else coupon + tree.expect(n + 1, following)
        following = values[n]
    return values


def toy_bermudan(tree, strike):
    """
    Payer Bermudan exercisable on every tree date.

    Returns:
        (value today, {n: option values on date n})
    """
    swaps = toy_swap_value(tree, strike)

    def roll(n, exercise, hold):
        payoff = hold if exercise is None else np.where(exercise > hold, exercise, hold)
        return tree.expect(n, payoff)

    hold, layers, _ = backward_induction(
        tree.n_dates, roll, lambda n: swaps[n], lambda n: True,
        np.zeros_like(tree.libor(tree.n_dates)),
    )
    return float(hold[0]), layers
