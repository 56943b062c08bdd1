"""Offline evaluation toolkit for top-n recommendation from implicit feedback."""

__version__ = "0.1.0"
