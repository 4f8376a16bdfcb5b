"""Stochastic impulsive fractional evolution equations with infinite delay."""

__version__ = "0.1.0"
