"""Distortion-adaptive embedding training with magnitude-weighted fusion."""

__version__ = "0.1.0"
