"""Simulation toolkit for a dual-pumped type-II PPKTP polarization-entanglement source."""

__version__ = "0.1.0"
