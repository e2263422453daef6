"""Accessibility-tree data machinery for web world models."""

__version__ = "0.1.0"
