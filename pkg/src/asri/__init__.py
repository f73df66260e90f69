"""Quasi-shuffle construction and simulation of strong integrators for
jump-diffusion stochastic differential equations."""

__version__ = "0.1.0"
