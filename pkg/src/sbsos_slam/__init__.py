"""Sparse bounded-degree SOS relaxations for planar SLAM."""

__version__ = "0.1.0"
