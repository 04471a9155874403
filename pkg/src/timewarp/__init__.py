"""Temporal preference-data factory and evaluation harness for Video-LLMs."""

__version__ = "0.1.0"
