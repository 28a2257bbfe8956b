"""Pain-point detection for customer-review corpora."""

__version__ = "0.1.0"
