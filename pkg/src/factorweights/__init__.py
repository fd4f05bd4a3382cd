"""Desk-scale multilingual sequence models with per-language weight factorization."""

__version__ = "0.1.0"

from .kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
