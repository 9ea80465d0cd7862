"""Contingency training: dataset augmentation with explicitly encoded missing values."""
__version__ = "0.1.0"
