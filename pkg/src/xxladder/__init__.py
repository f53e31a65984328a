"""Quench dynamics, entanglement and scrambling diagnostics for XX chains and ladders."""

__version__ = "0.1.0"
