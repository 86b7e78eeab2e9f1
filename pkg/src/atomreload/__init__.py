"""Iterative atom-array assembly: Monte Carlo loading simulator and cavity optics calculators."""

__version__ = "0.1.0"
