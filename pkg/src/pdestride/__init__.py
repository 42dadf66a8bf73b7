"""Identify governing PDEs from noisy grid data with stability-selected sparse regression."""
__version__ = "0.1.0"
