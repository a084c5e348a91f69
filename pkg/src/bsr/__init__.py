"""Bayesian successor representation: multiple successor maps selected by
online nonparametric inference over clustered reward functions."""

__version__ = "0.1.0"
