"""Numerical lab for detecting a low-rank spike in Gaussian noise."""
