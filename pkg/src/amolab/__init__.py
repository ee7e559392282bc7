"""Numerical laboratory for the almost Mathieu operator at strong coupling."""
__version__ = "0.1.0"
