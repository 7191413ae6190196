"""Malevolent dialogue response detection and classification toolkit."""

__version__ = "0.1.0"
