"""Quasi-local conserved quantities on spacelike 2-surfaces."""

__version__ = "0.1.0"
