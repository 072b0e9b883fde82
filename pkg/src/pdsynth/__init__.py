"""Probabilistic decomposition-synthesis of heavy-tailed oscillator responses."""
__version__ = "0.1.0"
