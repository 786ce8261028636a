"""Box arithmetic, overlap measures, and box-to-grid rasterization.

Boxes are center-format (cx, cy, w, h), coordinates normalized to the
unit square. The overlap functions accept arbitrary centers (useful in
tests); range invariants are enforced at annotation ingestion via
Box.validate_normalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"degenerate box: w={self.w}, h={self.h}")

    def corners(self):
        """(x1, y1, x2, y2)"""
        return (self.cx - self.w / 2, self.cy - self.h / 2,
                self.cx + self.w / 2, self.cy + self.h / 2)

    def area(self) -> float:
        return self.w * self.h

    def validate_normalized(self):
        """Ingestion check: box and its corner form inside the unit square."""
        x1, y1, x2, y2 = self.corners()
        eps = 1e-9
        if not (0 <= self.cx <= 1 and 0 <= self.cy <= 1):
            raise ValueError(f"box center outside unit square: {self}")
        if self.w > 1 + eps or self.h > 1 + eps:
            raise ValueError(f"box extent exceeds unit square: {self}")
        if x1 < -eps or y1 < -eps or x2 > 1 + eps or y2 > 1 + eps:
            raise ValueError(f"box corners outside unit square: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h])


def _inter_union(a: Box, b: Box):
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    inter = max(iw, 0.0) * max(ih, 0.0)
    # areas from the same corner arithmetic, so a == b gives iou exactly 1
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter, union


def box_iou(a: Box, b: Box) -> float:
    inter, union = _inter_union(a, b)
    return inter / union


def box_giou(a: Box, b: Box) -> float:
    """Generalized IoU: IoU minus the enclosing-hull dead-area penalty."""
    inter, union = _inter_union(a, b)
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    hull = (max(ax2, bx2) - min(ax1, bx1)) * (max(ay2, by2) - min(ay1, by1))
    return inter / union - (hull - union) / hull


def box_l1(a: Box, b: Box) -> float:
    return (abs(a.cx - b.cx) + abs(a.cy - b.cy)
            + abs(a.w - b.w) + abs(a.h - b.h))


@dataclass
class SegTarget:
    """Multi-hot class-presence grid of shape (H, W, n_classes + 1).

    Channel c marks cells whose center a box of class c covers; the
    last channel is background, set exactly where no object channel is.
    """

    grid: np.ndarray

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    @property
    def n_classes(self) -> int:
        return self.grid.shape[2] - 1

    def validate(self):
        g = self.grid
        if g.ndim != 3 or not np.isin(g, (0.0, 1.0)).all():
            raise ValueError("segmentation target must be a binary H x W x C grid")
        any_obj = g[:, :, :-1].any(axis=2)
        if not np.array_equal(g[:, :, -1] == 1.0, ~any_obj):
            raise ValueError("background channel inconsistent with object channels")


def rasterize_boxes(boxes, labels, height: int, width: int, n_classes: int) -> SegTarget:
    """Mark channel c at every cell whose center lies inside a class-c box.

    Overlapping boxes set multiple channels (multi-hot); the corner form
    is clipped to the unit square first.
    """
    if height < 1 or width < 1:
        raise ValueError("grid must be at least 1 x 1")
    grid = np.zeros((height, width, n_classes + 1))
    ys = (np.arange(height) + 0.5) / height
    xs = (np.arange(width) + 0.5) / width
    for box, label in zip(boxes, labels):
        label = int(label)
        if not 0 <= label < n_classes:
            raise ValueError(f"label {label} out of range [0, {n_classes})")
        x1, y1, x2, y2 = box.corners()
        x1, y1 = max(x1, 0.0), max(y1, 0.0)
        x2, y2 = min(x2, 1.0), min(y2, 1.0)
        rows = (ys >= y1) & (ys <= y2)
        cols = (xs >= x1) & (xs <= x2)
        grid[np.ix_(rows, cols, [label])] = 1.0
    grid[:, :, n_classes] = ~grid[:, :, :n_classes].any(axis=2)
    return SegTarget(grid)


def downsample_target(t: SegTarget, height: int, width: int) -> SegTarget:
    """Max-pool a target to a coarser grid; background recomputed after."""
    h, w, c = t.grid.shape
    if height > h or width > w:
        raise ValueError(f"cannot upsample target {h}x{w} to {height}x{width}")
    out = np.zeros((height, width, c))
    row_of = (np.arange(h) * height) // h
    col_of = (np.arange(w) * width) // w
    for r in range(h):
        for cc in range(w):
            out[row_of[r], col_of[cc]] = np.maximum(out[row_of[r], col_of[cc]],
                                                    t.grid[r, cc])
    out[:, :, c - 1] = ~out[:, :, : c - 1].any(axis=2)
    return SegTarget(out)
