"""Numerical companion for the second-order momentum distribution of dilute Fermi gases."""

__version__ = "0.1.0"
