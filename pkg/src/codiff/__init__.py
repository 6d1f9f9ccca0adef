"""Collaborative split diffusion sampling over simulated wireless links."""
from .kernels import BACKEND
from .rng import RngStreams

__version__ = "0.1.0"
