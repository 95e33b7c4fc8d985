"""Numerical toolkit for subgeometric ergodicity of Markov processes."""

__version__ = "0.1.0"
