"""Importance sampling for polynomial costs over rare Gaussian and Gaussian-copula sets."""

__version__ = "0.1.0"
