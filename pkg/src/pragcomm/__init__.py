"""Intention-aware image transmission simulator."""

__version__ = "0.1.0"
