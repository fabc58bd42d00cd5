"""Nonparametric estimation of the jump density of affine processes."""

__version__ = "0.1.0"
