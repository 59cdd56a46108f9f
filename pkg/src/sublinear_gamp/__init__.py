"""Bayesian GAMP for compressed sensing with sublinear sparsity."""

__version__ = "0.1.0"
