"""Desk-scale toolkit for affordance heatmap refinement on 2-D fields."""

__version__ = "0.1.0"

from .fields import BinaryMask, GradientPair, ScalarField

__all__ = ["ScalarField", "BinaryMask", "GradientPair", "__version__"]
