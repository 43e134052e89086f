"""Learned view descriptors for object recognition and pose retrieval."""

__version__ = "0.1.0"
