"""Numerical experiments on Lorentzian metrics of low (C^1) regularity."""

__version__ = "0.1.0"
