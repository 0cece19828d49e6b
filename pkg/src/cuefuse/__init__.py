"""Probabilistic multi-cue target inference for out-of-reach object selection."""

__version__ = "0.1.0"
