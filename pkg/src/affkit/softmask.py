"""Dataset-refinement primitives: signed distance fields and soft masks.

A binary object mask is converted into a composite signed distance field
(positive Euclidean distance inside, negative outside) and squashed through
a sigmoid to produce a soft mask with smooth transitions in (0, 1).
Annotation heatmaps can be intersected with object masks to drop responses
that spilled into the background.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateMask, DimensionMismatch
from .fields import BinaryMask, ScalarField

__all__ = ["SoftMaskParams", "signed_distance", "soft_mask", "intersect_annotation"]


@dataclass(frozen=True)
class SoftMaskParams:
    """Sigmoid parameters for soft-mask generation.

    temperature is the distance (in pixels) per sigmoid unit; inside_positive
    selects the sign convention (foreground positive when true).
    """

    temperature: float = 3.0
    inside_positive: bool = True

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


def signed_distance(m: BinaryMask) -> ScalarField:
    """Composite signed Euclidean distance field of a mask.

    Foreground pixels carry +distance to the nearest background pixel,
    background pixels carry -distance to the nearest foreground pixel.
    """
    fg = m.data.astype(bool)
    if fg.all() or (~fg).all():
        raise DegenerateMask("mask must contain both foreground and background pixels")
    inner = ndimage.distance_transform_edt(fg)
    outer = ndimage.distance_transform_edt(~fg)
    return ScalarField.from_array(np.where(fg, inner, -outer))


def soft_mask(m: BinaryMask, params: SoftMaskParams = SoftMaskParams()) -> ScalarField:
    """Sigmoid of the signed distance field; values lie strictly in (0, 1)."""
    d = signed_distance(m).data
    if not params.inside_positive:
        d = -d
    return ScalarField.from_array(1.0 / (1.0 + np.exp(-d / params.temperature)))


def intersect_annotation(gt: ScalarField, object_mask: BinaryMask) -> ScalarField:
    """Zero out annotation values outside the object mask."""
    if (gt.width, gt.height) != (object_mask.width, object_mask.height):
        raise DimensionMismatch(
            f"annotation {gt.width}x{gt.height} vs mask {object_mask.width}x{object_mask.height}"
        )
    return ScalarField.from_array(gt.data * object_mask.data)
