"""Perturbative algebraic QFT on a finite space-time lattice."""

__version__ = "0.1.0"
