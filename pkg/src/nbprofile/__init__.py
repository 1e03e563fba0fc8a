"""Neighborhood behaviour profiling and clustering for multi-neighborhood local search."""

__version__ = "0.1.0"
