"""Saddle point search and solution landscape construction."""

__version__ = "0.1.0"
