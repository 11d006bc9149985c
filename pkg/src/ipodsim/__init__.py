"""Simulation and verification harness for the iPod preference-exchange process."""

__version__ = "0.1.0"
