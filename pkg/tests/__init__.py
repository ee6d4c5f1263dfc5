"""Test suite for the Markov-functional pricing, calibration and hedging code."""
