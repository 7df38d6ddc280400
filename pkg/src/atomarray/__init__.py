"""Simulation and compilation toolkit for mobile neutral-atom arrays."""

__version__ = "0.1.0"
