"""Wavelet-attention accident anticipation on per-frame video features.

Submodules: numeric (autodiff), wavelet, attention, temporal, model, loss,
metrics, data, trainer, cli.
"""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
