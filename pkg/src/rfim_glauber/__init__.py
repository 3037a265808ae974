"""Glauber dynamics and spatial mixing for the random-field Ising model."""
__version__ = "0.1.0"
