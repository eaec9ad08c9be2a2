"""Test-time adaptive reconstruction fault detection (TARD) with source-only, AdaBN and MMD baselines."""

from ._core import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
