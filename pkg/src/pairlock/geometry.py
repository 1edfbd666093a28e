"""Axis-aligned box arithmetic.

Boxes use real pixel coordinates with the origin at the top-left corner and
half-open extents ``[min, max)`` on both axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates: {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted box: {coords}")

    @classmethod
    def from_seq(cls, values: Sequence[float]) -> "BoundingBox":
        if len(values) != 4:
            raise ValueError(f"box needs 4 coordinates, got {len(values)}")
        return cls(*(float(v) for v in values))

    def to_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0

    def contains_box(self, other: "BoundingBox") -> bool:
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and self.x_max >= other.x_max
            and self.y_max >= other.y_max
        )

    def clip(self, bounds: "BoundingBox") -> "BoundingBox":
        """Intersect with ``bounds``; a disjoint box collapses to zero area."""
        x0 = min(max(self.x_min, bounds.x_min), bounds.x_max)
        y0 = min(max(self.y_min, bounds.y_min), bounds.y_max)
        x1 = max(min(self.x_max, bounds.x_max), x0)
        y1 = max(min(self.y_max, bounds.y_max), y0)
        return BoundingBox(x0, y0, x1, y1)

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def scale(self, sx: float, sy: float) -> "BoundingBox":
        return BoundingBox(self.x_min * sx, self.y_min * sy, self.x_max * sx, self.y_max * sy)


def area(box: BoundingBox) -> float:
    return (box.x_max - box.x_min) * (box.y_max - box.y_min)


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 for disjoint boxes or a zero-area union."""
    inter = intersection_area(a, b)
    union = area(a) + area(b) - inter
    if union <= 0.0 or inter <= 0.0:
        return 0.0
    # guard against rounding pushing the ratio past 1 for near-identical boxes
    return min(inter / union, 1.0)


def union_box(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    """Smallest box containing both ``a`` and ``b``."""
    return BoundingBox(
        min(a.x_min, b.x_min),
        min(a.y_min, b.y_min),
        max(a.x_max, b.x_max),
        max(a.y_max, b.y_max),
    )


def union_all(boxes: Iterable[BoundingBox]) -> BoundingBox:
    it = iter(boxes)
    out = next(it)
    for box in it:
        out = union_box(out, box)
    return out


def contains_point(box: BoundingBox, x: float, y: float) -> bool:
    return box.x_min <= x < box.x_max and box.y_min <= y < box.y_max
