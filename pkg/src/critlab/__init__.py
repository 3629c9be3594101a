"""Simulation laboratory for self-organized criticality in economic and financial models."""

__version__ = "0.1.0"

from critlab.errors import ModelError
from critlab.rng import RngStream
from critlab.series import NoiseSpec, TimeSeries

__all__ = ["ModelError", "RngStream", "NoiseSpec", "TimeSeries", "__version__"]
