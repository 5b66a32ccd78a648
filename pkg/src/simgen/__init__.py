"""Surrogate-guided synthetic data generation for simulation parameter studies."""

__version__ = "0.1.0"
