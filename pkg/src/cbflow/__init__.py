"""Disturbance flows, monotone circle maps and coalescing Brownian motion."""

__version__ = "0.1.0"
