"""Numerical laboratory for the modified p-Stokes system on a periodic box."""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
