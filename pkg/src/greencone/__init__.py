"""Weak-KAM solver and Green-bundle cone verification toolkit for Tonelli Hamiltonians."""

__version__ = "0.1.0"
