"""Filtered fictitious play for games with noisy action observations, and the
LFFP lookahead learner for partially observable stochastic games."""

__version__ = "0.1.0"
