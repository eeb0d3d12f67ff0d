"""Randomized low-rank factorization inside a parity-symmetric TEBD solver."""

__version__ = "0.1.0"
