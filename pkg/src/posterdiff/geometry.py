"""Axis-aligned box algebra in normalized canvas coordinates.

Boxes are center-format (cx, cy, w, h), all fractions of the canvas,
matching the row layout of the diffusion state. Corner format is an
internal detail.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Optional

CONTAIN_EPS = 0.002

CATEGORIES = ("empty", "logo", "text", "underlay")


@dataclass(frozen=True)
class BBox:
    """Center-format box. w and h must be non-negative."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"box size must be non-negative, got w={self.w}, h={self.h}")

    @property
    def x0(self) -> float:
        return self.cx - 0.5 * self.w

    @property
    def x1(self) -> float:
        return self.cx + 0.5 * self.w

    @property
    def y0(self) -> float:
        return self.cy - 0.5 * self.h

    @property
    def y1(self) -> float:
        return self.cy + 0.5 * self.h

    def corners(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) corner extent."""
        return (self.x0, self.y0, self.x1, self.y1)

    @staticmethod
    def from_corners(x0: float, y0: float, x1: float, y1: float) -> "BBox":
        return BBox(0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0)


def area(b: BBox) -> float:
    return b.w * b.h


def intersection_area(a: BBox, b: BBox) -> float:
    """Area of the overlap rectangle; 0 if disjoint."""
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 when the union has zero area."""
    inter = intersection_area(a, b)
    union = area(a) + area(b) - inter
    if union <= 0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def contains(outer: BBox, inner: BBox, eps: float = CONTAIN_EPS) -> bool:
    """True iff inner's extent lies within outer's extent inflated by eps."""
    return (
        inner.x0 >= outer.x0 - eps
        and inner.y0 >= outer.y0 - eps
        and inner.x1 <= outer.x1 + eps
        and inner.y1 <= outer.y1 + eps
    )


def clamp_to_canvas(b: BBox) -> BBox:
    """Clip the corner extent to [0,1]^2 and rebuild the box from the result.

    A box entirely outside the canvas collapses to a zero-area box on the
    boundary.
    """
    if 0.0 <= b.x0 and b.x1 <= 1.0 and 0.0 <= b.y0 and b.y1 <= 1.0:
        return b
    x0 = min(max(b.x0, 0.0), 1.0)
    x1 = min(max(b.x1, 0.0), 1.0)
    y0 = min(max(b.y0, 0.0), 1.0)
    y1 = min(max(b.y1, 0.0), 1.0)
    if x1 < x0:
        x0 = x1 = min(max(b.cx, 0.0), 1.0)
    if y1 < y0:
        y0 = y1 = min(max(b.cy, 0.0), 1.0)
    return BBox.from_corners(x0, y0, x1, y1)


@dataclass(frozen=True)
class Element:
    """A typed layout rectangle."""

    category: str
    box: BBox

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}; expected one of {CATEGORIES}")

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "cx": self.box.cx,
            "cy": self.box.cy,
            "w": self.box.w,
            "h": self.box.h,
        }

    @staticmethod
    def from_dict(d: dict) -> "Element":
        return Element(d["category"], BBox(float(d["cx"]), float(d["cy"]), float(d["w"]), float(d["h"])))


@dataclass(frozen=True)
class Layout:
    """An ordered collection of elements on one canvas."""

    elements: tuple[Element, ...]

    def __init__(self, elements=()):
        object.__setattr__(self, "elements", tuple(elements))

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self) -> Iterator[Element]:
        return iter(self.elements)

    def by_category(self, category: str) -> list[Element]:
        return [e for e in self.elements if e.category == category]

    def to_dict(self) -> dict:
        return {"elements": [e.to_dict() for e in self.elements]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def from_dict(d: dict) -> "Layout":
        return Layout(Element.from_dict(e) for e in d["elements"])

    @staticmethod
    def from_json(s: str) -> "Layout":
        return Layout.from_dict(json.loads(s))


def center_sentinel_box() -> BBox:
    """Zero-area box at canvas center, the stand-in when no salient region exists."""
    return BBox(0.5, 0.5, 0.0, 0.0)


def load_layout(path) -> Layout:
    with open(path, "r", encoding="utf-8") as f:
        return Layout.from_dict(json.load(f))


def save_layout(layout: Layout, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(layout.to_dict(), f)
