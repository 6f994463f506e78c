"""Sparsity detection and LLM-driven repair for streaming user-product review data."""

__version__ = "0.1.0"
