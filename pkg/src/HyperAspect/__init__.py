"""Weakly supervised aspect extraction with hyperbolic disentangled seed words."""

__version__ = "0.1.0"
