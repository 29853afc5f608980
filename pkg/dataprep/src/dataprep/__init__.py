"""Offline tooling for the packed TINB image dataset format: directory
tree conversion and synthetic dataset generation."""

__version__ = "1.0.0"
