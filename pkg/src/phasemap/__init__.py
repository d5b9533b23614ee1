"""Generative-classifier indicators of phase transitions over parameter grids."""

__version__ = "0.1.0"
