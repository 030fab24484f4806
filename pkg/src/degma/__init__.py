"""Numerical toolkit for degenerate Monge-Ampere equations near flat and curved boundaries."""

__version__ = "0.1.0"
