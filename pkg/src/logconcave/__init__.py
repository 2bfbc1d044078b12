"""Numerical verification of log-concavity, Prekopa-Leindler type
inequalities and Gaussian change-of-variables identities on desk-scale grids."""

__version__ = "0.1.0"
