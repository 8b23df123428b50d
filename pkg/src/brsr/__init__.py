"""Blind radar signal restoration with Self-ONN generative adversarial networks."""

__version__ = "0.1.0"
