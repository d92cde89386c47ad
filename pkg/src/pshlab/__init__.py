"""Numerical laboratory for plurisubharmonic integrability, maximal functions and Lipschitz extraction."""

__version__ = "0.1.0"
