"""Axis-aligned pixel boxes in (x, y, w, h) form, top-left origin."""

from __future__ import annotations

from typing import NamedTuple


class Box(NamedTuple):
    x: int
    y: int
    w: int
    h: int

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def intersects(self, other: "Box") -> bool:
        return (
            self.x < other.x2
            and other.x < self.x2
            and self.y < other.y2
            and other.y < self.y2
        )

    def intersection_area(self, other: "Box") -> int:
        iw = min(self.x2, other.x2) - max(self.x, other.x)
        ih = min(self.y2, other.y2) - max(self.y, other.y)
        if iw <= 0 or ih <= 0:
            return 0
        return iw * ih

    def contains(self, other: "Box") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and other.x2 <= self.x2
            and other.y2 <= self.y2
        )


def clamp_box(box: Box, width: int, height: int) -> Box:
    """Clip a box to the [0,width) x [0,height) raster. May return zero extents."""
    x0 = min(max(box.x, 0), width)
    y0 = min(max(box.y, 0), height)
    x1 = min(max(box.x2, 0), width)
    y1 = min(max(box.y2, 0), height)
    return Box(x0, y0, x1 - x0, y1 - y0)
