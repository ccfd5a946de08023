"""Robust approximate-simulation certificates for hierarchical control of linear systems."""

__version__ = "0.1.0"
