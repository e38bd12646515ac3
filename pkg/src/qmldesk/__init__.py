"""Desk-scale simulators for quantum-inspired clustering and neural nets."""

__version__ = "0.1.0"
