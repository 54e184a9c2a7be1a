"""Trace inclusion between networks of data automata and an observer."""

__version__ = "0.1.0"
