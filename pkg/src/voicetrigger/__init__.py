"""Personalized voice trigger: keyword spotting gated by speaker verification."""

__version__ = "0.1.0"
