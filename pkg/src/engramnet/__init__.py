"""Decentralised sample storage in active directed graphs."""

__version__ = "0.1.0"
