"""Markov-functional swap-rate model with Black and UVDD digital mappings."""
