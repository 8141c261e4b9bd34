"""Axis-aligned box math used for section layout analysis.

Coordinates are CSS pixels relative to the document origin, stored as
floats because browsers report subpixel layout. Comparisons that need
to tolerate rendering noise use :data:`PIXEL_TOLERANCE`.
"""

from __future__ import annotations

from dataclasses import dataclass

PIXEL_TOLERANCE = 0.5


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    width: float
    height: float

    def __post_init__(self) -> None:
        if self.width < 0 or self.height < 0:
            raise ValueError(f"negative extent: {self.width}x{self.height}")

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def right(self) -> float:
        return self.x + self.width

    @property
    def bottom(self) -> float:
        return self.y + self.height

    def contains(self, other: "BoundingBox", tol: float = PIXEL_TOLERANCE) -> bool:
        return (
            self.x <= other.x + tol
            and self.y <= other.y + tol
            and self.right >= other.right - tol
            and self.bottom >= other.bottom - tol
        )

    def approx_equal(self, other: "BoundingBox", tol: float = PIXEL_TOLERANCE) -> bool:
        return (
            abs(self.x - other.x) <= tol
            and abs(self.y - other.y) <= tol
            and abs(self.width - other.width) <= tol
            and abs(self.height - other.height) <= tol
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.width, self.height)


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.right, b.right) - max(a.x, b.x)
    h = min(a.bottom, b.bottom) - max(a.y, b.y)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when the union is degenerate."""
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def merge_boxes(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    """Minimal box covering both inputs."""
    x = min(a.x, b.x)
    y = min(a.y, b.y)
    return BoundingBox(
        x=x,
        y=y,
        width=max(a.right, b.right) - x,
        height=max(a.bottom, b.bottom) - y,
    )


def vertically_adjacent(a: BoundingBox, b: BoundingBox) -> bool:
    """True when the boxes touch or abut vertically and their horizontal
    projections overlap. Used by the optional adjacency merge rule."""
    top, bot = (a, b) if a.y <= b.y else (b, a)
    gap = bot.y - top.bottom
    if gap > 0:
        return False
    h_overlap = min(a.right, b.right) - max(a.x, b.x)
    return h_overlap > 0
