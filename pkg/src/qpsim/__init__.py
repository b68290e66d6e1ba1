"""Batched maximal-coordinate rigid body simulation with RL training loops."""

__version__ = "0.1.0"
