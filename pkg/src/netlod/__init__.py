"""Algebraic localized orthogonal decomposition on spatial networks."""
__version__ = "0.1.0"
