"""Simulation and verification toolkit for clustering items from locally
private one-bit user sketches."""

__version__ = "0.1.0"
