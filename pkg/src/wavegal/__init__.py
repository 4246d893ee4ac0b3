"""Wavelet-Galerkin solver for elliptic interface problems on the unit square."""
__version__ = "0.1.0"
