"""Desk-scale numerical laboratory for randomized Klein-Gordon experiments."""

__version__ = "0.1.0"
