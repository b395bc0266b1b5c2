"""Simulation toolkit for active label cleaning."""
__version__ = "0.1.0"
