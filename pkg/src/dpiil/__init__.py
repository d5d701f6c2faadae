"""Precision-aware interactive imitation learning on a 2D aperture task."""

__version__ = "0.1.0"
