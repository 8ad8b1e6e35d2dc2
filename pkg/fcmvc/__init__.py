"""Streaming consensus clustering over incomplete views."""

__version__ = "0.1.0"
