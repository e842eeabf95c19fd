"""Numerical laboratory for type-II blow up of the radial energy-critical
heat equation in four space dimensions."""

__version__ = "0.1.0"
