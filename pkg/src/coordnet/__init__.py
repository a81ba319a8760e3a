"""Coordination and toxicity analytics for tweet-like corpora."""

__version__ = "0.1.0"
