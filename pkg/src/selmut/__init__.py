"""Nonlocal mutation-selection-competition equation on bounded trait domains."""
__version__ = "0.1.0"
