"""Numerical laboratory for random products in SL(2,R)."""
__version__ = "0.1.0"
