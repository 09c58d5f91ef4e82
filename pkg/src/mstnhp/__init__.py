"""Multivariate spatio-temporal neural Hawkes processes on numpy."""

__version__ = "0.1.0"
