"""Discrete harmonic maps from closed surfaces of genus >= 2 to hyperbolic surfaces."""

__version__ = "0.1.0"
