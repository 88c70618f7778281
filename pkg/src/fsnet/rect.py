"""Axis-aligned rectangles in (x, y, w, h) form, 0-based pixel coordinates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        # builtin floats keep repr (and written files) free of numpy noise
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"rect needs positive size, got w={self.w} h={self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=np.float64)

    def clipped(self, width: float, height: float, min_size: float = 1.0) -> "Rect":
        """Clip to image bounds, keeping at least min_size on each side."""
        x1 = min(max(self.x, 0.0), width - min_size)
        y1 = min(max(self.y, 0.0), height - min_size)
        x2 = max(min(self.x2, width), x1 + min_size)
        y2 = max(min(self.y2, height), y1 + min_size)
        return Rect(x1, y1, x2 - x1, y2 - y1)


def iou(a: Rect, b: Rect) -> float:
    """Intersection over union of two rects."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


def center_distance(a: Rect, b: Rect) -> float:
    (ax, ay), (bx, by) = a.center, b.center
    return float(np.hypot(ax - bx, ay - by))


def rects_to_array(rects) -> np.ndarray:
    return np.array([[r.x, r.y, r.w, r.h] for r in rects], dtype=np.float64)
