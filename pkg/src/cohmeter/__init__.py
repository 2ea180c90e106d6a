"""Quantifying coherent delocalization of a single excitation over n sites."""
__version__ = "0.1.0"
