"""Numerical laboratory for random homogenization of fully nonlinear parabolic equations."""

__version__ = "0.1.0"
