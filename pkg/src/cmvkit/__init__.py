"""Numerical spectral theory for ergodic CMV matrices."""

__version__ = "0.1.0"
