"""Experiment configurations for pricing, calibration, future-smile and hedging runs."""
