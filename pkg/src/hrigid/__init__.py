"""Numerical rigidity of quasi-isometries on the Heisenberg group."""

__version__ = "0.1.0"
