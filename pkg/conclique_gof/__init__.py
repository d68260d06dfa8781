"""Conclique-based goodness-of-fit testing for Markov random fields on lattices."""

__version__ = "1.0.0"
