"""Keyframe-level tag localization and suggestion for web videos by
nearest-neighbour voting over tagged image corpora."""

__version__ = "0.1.0"
