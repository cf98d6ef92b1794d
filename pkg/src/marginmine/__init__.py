"""Margin-based parallel sentence mining over multilingual embeddings."""

__version__ = "0.1.0"
