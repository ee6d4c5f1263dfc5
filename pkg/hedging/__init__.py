"""Daily hedging backtests of Bermudans against synthetic or loaded market histories."""
