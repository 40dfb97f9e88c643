"""Hybrid-field 6DMA THz channel modeling and estimation."""

__version__ = "0.1.0"
