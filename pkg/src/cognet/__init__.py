"""Deterministic simulator of software-defined cognitive wireless networks."""

__version__ = "0.1.0"
