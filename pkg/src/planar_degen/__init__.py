"""Numerical toolkit for planar divergence-form equations with degenerate or
singular monotone fields, their duals and the associated Beltrami equations."""

__version__ = "0.1.0"
