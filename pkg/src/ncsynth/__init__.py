"""Symbolic controller synthesis for nonlinear networked control systems."""

__version__ = "0.1.0"
