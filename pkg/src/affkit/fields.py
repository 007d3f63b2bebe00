"""Grid data model and low-level image-processing primitives.

A ScalarField is a row-major 2-D grid of finite float64 values; a
BinaryMask restricts values to {0, 1}. Both are immutable: the wrapped
array is marked read-only at construction, so instances are safe to share
across threads. Every operation here is a pure function of its inputs.

Fields serialize to the plain-text "AFG1" format: line 1 is the magic
token AFG1, line 2 is "<width> <height>", and the remainder is exactly
width*height whitespace-separated decimal floats in row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import (
    AllZeroField,
    DimensionMismatch,
    EmptyRegion,
    FieldError,
    FieldTooSmall,
    MalformedHeader,
    NegativeValue,
    NonFiniteValue,
    ZeroVariance,
)

__all__ = [
    "ScalarField",
    "BinaryMask",
    "GradientPair",
    "sum_normalize",
    "minmax_normalize",
    "zscore_normalize",
    "sobel_gradients",
    "distance_transform",
    "connected_components",
    "boundary_mask",
    "read_field",
    "write_field",
    "read_mask",
    "write_mask",
]


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, order="C", copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Immutable 2-D grid of finite real values, shape (height, width)."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DimensionMismatch(f"field dimensions must be positive, got {self.width}x{self.height}")
        if self.data.shape != (self.height, self.width):
            raise DimensionMismatch(
                f"data shape {self.data.shape} does not match {self.width}x{self.height}"
            )
        if not np.isfinite(self.data).all():
            raise NonFiniteValue("field contains NaN or Inf")
        if self.data.flags.writeable or self.data.dtype != np.float64:
            object.__setattr__(self, "data", _frozen(self.data, np.float64))

    @classmethod
    def from_array(cls, arr) -> "ScalarField":
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim != 2:
            raise DimensionMismatch(f"expected a 2-D array, got ndim={a.ndim}")
        return cls(width=a.shape[1], height=a.shape[0], data=_frozen(a, np.float64))

    @classmethod
    def full(cls, width: int, height: int, value: float = 0.0) -> "ScalarField":
        return cls.from_array(np.full((height, width), float(value)))

    def equals(self, other: "ScalarField") -> bool:
        """Bit-exact equality of dimensions and values."""
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Immutable 2-D grid with values restricted to {0, 1}."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DimensionMismatch(f"mask dimensions must be positive, got {self.width}x{self.height}")
        if self.data.shape != (self.height, self.width):
            raise DimensionMismatch(
                f"data shape {self.data.shape} does not match {self.width}x{self.height}"
            )
        if not np.isin(self.data, (0, 1)).all():
            raise FieldError("mask values must be exactly 0 or 1")
        if self.data.flags.writeable or self.data.dtype != np.uint8:
            object.__setattr__(self, "data", _frozen(self.data, np.uint8))

    @classmethod
    def from_array(cls, arr) -> "BinaryMask":
        a = np.asarray(arr)
        if a.ndim != 2:
            raise DimensionMismatch(f"expected a 2-D array, got ndim={a.ndim}")
        if not np.isin(a, (0, 1)).all():
            raise FieldError("mask values must be exactly 0 or 1")
        return cls(width=a.shape[1], height=a.shape[0], data=_frozen(a, np.uint8))

    def complement(self) -> "BinaryMask":
        return BinaryMask.from_array(1 - self.data)

    def equals(self, other: "BinaryMask") -> bool:
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class GradientPair:
    """Horizontal and vertical gradient fields of a source field."""

    gx: ScalarField
    gy: ScalarField

    def __post_init__(self):
        if (self.gx.width, self.gx.height) != (self.gy.width, self.gy.height):
            raise DimensionMismatch("gradient components must share dimensions")


def _require_same_shape(a, b):
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(
            f"dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


# ---------------------------------------------------------------------------
# normalization

def sum_normalize(f: ScalarField) -> ScalarField:
    """Scale a non-negative field so its values sum to 1."""
    d = f.data
    if (d < 0).any():
        raise NegativeValue("sum_normalize requires non-negative values")
    s = float(d.sum())
    if s == 0.0:
        raise AllZeroField("cannot sum-normalize an all-zero field")
    return ScalarField.from_array(d / s)


def minmax_normalize(f: ScalarField) -> ScalarField:
    """Affinely map values onto [0, 1]; requires a non-constant field."""
    d = f.data
    lo, hi = float(d.min()), float(d.max())
    if hi == lo:
        raise ZeroVariance("cannot minmax-normalize a constant field")
    return ScalarField.from_array((d - lo) / (hi - lo))


def zscore_normalize(f: ScalarField) -> ScalarField:
    """Shift/scale to zero mean and unit population standard deviation."""
    d = f.data
    sigma = float(d.std())
    if sigma == 0.0:
        raise ZeroVariance("cannot z-score a constant field")
    return ScalarField.from_array((d - d.mean()) / sigma)


# ---------------------------------------------------------------------------
# Sobel gradients

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


def _correlate3(padded: np.ndarray, kernel: np.ndarray, h: int, w: int) -> np.ndarray:
    out = np.zeros((h, w))
    for u in range(3):
        for v in range(3):
            k = kernel[u, v]
            if k != 0.0:
                out += k * padded[u : u + h, v : v + w]
    return out


def _sobel_arrays(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w = d.shape
    padded = np.pad(d, 1, mode="edge")
    return _correlate3(padded, _SOBEL_X, h, w), _correlate3(padded, _SOBEL_Y, h, w)


def _sobel_adjoint_arrays(bx: np.ndarray, by: np.ndarray) -> np.ndarray:
    """Adjoint of (edge-pad then valid correlation) for both Sobel kernels."""
    h, w = bx.shape
    gpad = np.zeros((h + 2, w + 2))
    for u in range(3):
        for v in range(3):
            kx, ky = _SOBEL_X[u, v], _SOBEL_Y[u, v]
            if kx != 0.0:
                gpad[u : u + h, v : v + w] += kx * bx
            if ky != 0.0:
                gpad[u : u + h, v : v + w] += ky * by
    # fold padded borders back onto the edge pixels (adjoint of edge replication)
    out = gpad[1 : h + 1, 1 : w + 1].copy()
    out[0, :] += gpad[0, 1 : w + 1]
    out[-1, :] += gpad[h + 1, 1 : w + 1]
    out[:, 0] += gpad[1 : h + 1, 0]
    out[:, -1] += gpad[1 : h + 1, w + 1]
    out[0, 0] += gpad[0, 0]
    out[0, -1] += gpad[0, w + 1]
    out[-1, 0] += gpad[h + 1, 0]
    out[-1, -1] += gpad[h + 1, w + 1]
    return out


def sobel_gradients(f: ScalarField) -> GradientPair:
    """3x3 Sobel gradients with edge-replicate padding.

    gx uses the kernel [[-1,0,1],[-2,0,2],[-1,0,1]] applied as a
    correlation; gy uses its transpose.
    """
    if f.width < 3 or f.height < 3:
        raise FieldTooSmall(f"sobel requires at least 3x3, got {f.width}x{f.height}")
    gx, gy = _sobel_arrays(f.data)
    return GradientPair(gx=ScalarField.from_array(gx), gy=ScalarField.from_array(gy))


# ---------------------------------------------------------------------------
# distance transform and labeling

def distance_transform(m: BinaryMask) -> ScalarField:
    """Exact Euclidean distance from every pixel to the nearest pixel of the
    opposite class, measured center to center.

    Degenerate all-0 or all-1 masks have no opposite class; every pixel then
    receives the sentinel value width + height.
    """
    fg = m.data.astype(bool)
    if fg.all() or (~fg).all():
        return ScalarField.full(m.width, m.height, float(m.width + m.height))
    dist_fg = ndimage.distance_transform_edt(fg)
    dist_bg = ndimage.distance_transform_edt(~fg)
    return ScalarField.from_array(np.where(fg, dist_fg, dist_bg))


_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
_STRUCTURE_8 = np.ones((3, 3), dtype=int)


def _relabel_raster(labels: np.ndarray) -> np.ndarray:
    """Renumber labels 1..K in raster order of first occurrence."""
    flat = labels.ravel()
    uniq, first = np.unique(flat, return_index=True)
    keep = uniq != 0
    uniq, first = uniq[keep], first[keep]
    order = uniq[np.argsort(first, kind="stable")]
    remap = np.zeros(int(labels.max()) + 1, dtype=np.int32)
    remap[order] = np.arange(1, len(order) + 1, dtype=np.int32)
    return remap[labels]


def connected_components(m: BinaryMask, connectivity: int = 4) -> np.ndarray:
    """Label connected regions of 1-pixels; 0 marks background.

    Labels are 1..K in raster order of each component's first pixel.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = _STRUCTURE_4 if connectivity == 4 else _STRUCTURE_8
    labels, n = ndimage.label(m.data, structure=structure)
    if n == 0:
        return np.zeros((m.height, m.width), dtype=np.int32)
    return _relabel_raster(labels)


def boundary_mask(g: ScalarField, threshold: float, width_px: int) -> BinaryMask:
    """Band of pixels within width_px (Euclidean) of the region boundary.

    The region is {g >= threshold}; its boundary is every region pixel with
    at least one in-bounds 4-neighbor below threshold.
    """
    if width_px < 0:
        raise ValueError("width_px must be non-negative")
    region = g.data >= threshold
    if not region.any():
        raise EmptyRegion(f"no pixel reaches threshold {threshold}")
    b = np.zeros_like(region)
    b[1:, :] |= region[1:, :] & ~region[:-1, :]
    b[:-1, :] |= region[:-1, :] & ~region[1:, :]
    b[:, 1:] |= region[:, 1:] & ~region[:, :-1]
    b[:, :-1] |= region[:, :-1] & ~region[:, 1:]
    if width_px == 0 or not b.any():
        return BinaryMask.from_array(b.astype(np.uint8))
    dist = ndimage.distance_transform_edt(~b)
    return BinaryMask.from_array((dist <= width_px + 1e-9).astype(np.uint8))


# ---------------------------------------------------------------------------
# AFG1 file format

_MAGIC = "AFG1"


def write_field(f: ScalarField, path) -> None:
    """Write a field in AFG1 format.

    Values are emitted as shortest round-trip decimals so that
    read_field(write_field(f)) reproduces f bit-exactly.
    """
    lines = [_MAGIC, f"{f.width} {f.height}"]
    for row in f.data:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_field(path) -> ScalarField:
    """Read a ScalarField from an AFG1 file."""
    tokens = Path(path).read_text(encoding="ascii").split()
    if not tokens or tokens[0] != _MAGIC:
        raise MalformedHeader(f"missing {_MAGIC} magic in {path}")
    if len(tokens) < 3:
        raise MalformedHeader(f"truncated header in {path}")
    try:
        width, height = int(tokens[1]), int(tokens[2])
    except ValueError as exc:
        raise MalformedHeader(f"bad dimensions line in {path}") from exc
    if width < 1 or height < 1:
        raise MalformedHeader(f"non-positive dimensions in {path}")
    values = tokens[3:]
    if len(values) != width * height:
        raise DimensionMismatch(
            f"{path} declares {width}x{height} = {width * height} values, found {len(values)}"
        )
    try:
        data = np.array([float(v) for v in values]).reshape(height, width)
    except ValueError as exc:
        raise MalformedHeader(f"unparseable value in {path}") from exc
    if not np.isfinite(data).all():
        raise NonFiniteValue(f"{path} contains non-finite values")
    return ScalarField.from_array(data)


def write_mask(m: BinaryMask, path) -> None:
    """Write a BinaryMask in AFG1 format with 0/1 tokens."""
    lines = [_MAGIC, f"{m.width} {m.height}"]
    for row in m.data:
        lines.append(" ".join(str(int(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_mask(path) -> BinaryMask:
    """Read a BinaryMask from an AFG1 file; values must be 0 or 1."""
    f = read_field(path)
    if not np.isin(f.data, (0.0, 1.0)).all():
        raise FieldError(f"{path} contains values other than 0 and 1")
    return BinaryMask.from_array(f.data.astype(np.uint8))
