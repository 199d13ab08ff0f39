"""Simulation and verification toolkit for randomized controls in jump-diffusions."""

__version__ = "0.1.0"
