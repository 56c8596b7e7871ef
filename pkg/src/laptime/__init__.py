"""Minimum-lap-time strategies for battery-electric race cars via second-order cone programming."""

__version__ = "0.1.0"
