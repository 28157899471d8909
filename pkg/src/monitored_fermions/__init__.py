"""Quantum-trajectory simulation of monitored free fermions on hypercubic lattices."""

__version__ = "0.1.0"
