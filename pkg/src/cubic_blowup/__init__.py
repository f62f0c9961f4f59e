"""Spectrum and threshold dynamics of self-similar blowup for the radial cubic wave equation."""

__version__ = "0.1.0"
