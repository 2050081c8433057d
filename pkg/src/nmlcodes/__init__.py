"""Normalized maximum likelihood codes: construction, sampling and large deviations."""

__version__ = "0.1.0"
