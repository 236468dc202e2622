"""Pricing equilibria between a bundle seller and single-item sellers."""
__version__ = "0.1.0"
