"""Ginzburg-Landau relaxation of Steiner and Gilbert-Steiner networks in R^n."""

__version__ = "0.1.0"
