"""Saturation throughput of slotted CSMA networks under collision and capture receivers."""

__version__ = "0.1.0"
