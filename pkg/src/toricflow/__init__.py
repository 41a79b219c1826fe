"""Toric Kahler geometry in symplectic coordinates and the Calabi flow."""

__version__ = "0.1.0"
