"""Numerical lab for random band matrices and their generalized resolvents."""

__version__ = "0.1.0"
