"""Differentially private elastic-net logistic regression by objective perturbation."""

__version__ = "0.1.0"
