"""Multiresolution coupled tensor completion."""

__version__ = "1.0.0"
