"""Simulation and CLS inference for 2-type Galton-Watson processes with immigration."""
from .laws import FiniteLaw, GwiModel, preset
from .model import MeanMatrix, ModelError, eigen_decompose, spectral_radius

__all__ = ["FiniteLaw", "GwiModel", "MeanMatrix", "ModelError", "eigen_decompose", "preset", "spectral_radius"]
__version__ = "0.1.0"
