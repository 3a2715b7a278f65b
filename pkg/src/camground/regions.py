"""Pixel regions: thresholded heatmap areas and rasterized boxes.

A region is a boolean HxW mask over the frame. Heatmap regions come from
thresholding a normalized map; ground-truth regions come from rasterizing
inclusive-coordinate bounding boxes. Overlap metrics reduce to integer pixel
counts on these masks, so every downstream ratio is an exact quotient of two
integers.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from .annotations import BoundingBox
from .cam import Heatmap
from .errors import BoxOutOfBounds, ShapeMismatch


class Comparison(enum.Enum):
    """Threshold comparison: keep pixels >= tau, or strictly > tau."""

    GEQ = ">="
    GT = ">"


@dataclass(frozen=True)
class PixelRegion:
    """Boolean mask over an HxW frame."""

    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask)
        if mask.ndim != 2:
            raise ShapeMismatch(f"region mask must be 2-D, got shape {mask.shape}")
        object.__setattr__(self, "mask", mask.astype(bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape  # type: ignore[return-value]

    @property
    def size(self) -> int:
        """Number of pixels in the region."""
        return int(self.mask.sum())

    @property
    def is_empty(self) -> bool:
        return self.size == 0

    def intersection_count(self, other: "PixelRegion") -> int:
        if self.shape != other.shape:
            raise ShapeMismatch(f"region shapes differ: {self.shape} vs {other.shape}")
        return int(np.logical_and(self.mask, other.mask).sum())

    def union(self, other: "PixelRegion") -> "PixelRegion":
        if self.shape != other.shape:
            raise ShapeMismatch(f"region shapes differ: {self.shape} vs {other.shape}")
        return PixelRegion(np.logical_or(self.mask, other.mask))

    def coords(self) -> list[tuple[int, int]]:
        """Region pixels as sorted (row, col) pairs."""
        ys, xs = np.nonzero(self.mask)
        return sorted(zip(ys.tolist(), xs.tolist()))

    @classmethod
    def empty(cls, shape: tuple[int, int]) -> "PixelRegion":
        return cls(np.zeros(shape, dtype=bool))

    @classmethod
    def from_coords(cls, shape: tuple[int, int], coords: Iterable[tuple[int, int]]) -> "PixelRegion":
        mask = np.zeros(shape, dtype=bool)
        for y, x in coords:
            mask[y, x] = True
        return cls(mask)


def threshold_region(
    heatmap: Heatmap, tau: float, comparison: Comparison = Comparison.GEQ
) -> PixelRegion:
    """Pixels whose heatmap value passes tau under the given comparison."""
    if comparison is Comparison.GEQ:
        return PixelRegion(heatmap.values >= tau)
    return PixelRegion(heatmap.values > tau)


def rasterize_box(box: BoundingBox, shape: tuple[int, int]) -> PixelRegion:
    """Mask of one inclusive-coordinate box on an HxW frame."""
    h, w = int(shape[0]), int(shape[1])
    if not (0 <= box.x_min <= box.x_max < w and 0 <= box.y_min <= box.y_max < h):
        raise BoxOutOfBounds(
            f"box {box.label!r} [{box.x_min},{box.y_min},{box.x_max},{box.y_max}] "
            f"exceeds {h}x{w} frame"
        )
    mask = np.zeros((h, w), dtype=bool)
    mask[box.y_min : box.y_max + 1, box.x_min : box.x_max + 1] = True
    return PixelRegion(mask)


def rasterize_boxes(boxes: Iterable[BoundingBox], shape: tuple[int, int]) -> PixelRegion:
    """Union mask of several boxes; empty iterable gives the empty region."""
    region = PixelRegion.empty((int(shape[0]), int(shape[1])))
    for box in boxes:
        region = region.union(rasterize_box(box, shape))
    return region
