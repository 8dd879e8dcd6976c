"""Simulation and analysis toolkit for grid-forming converters under hybrid angle control."""
__version__ = "0.1.0"
