"""Simulation and learning toolkit for beam-steered mmWave gesture sensing."""

__version__ = "0.1.0"
