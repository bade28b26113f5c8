"""Integer pixel geometry: boxes and segmentation masks.

Boxes are half-open integer ranges [x, x+w) x [y, y+h); two boxes that share
only an edge do not overlap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet, Iterable, Optional, Tuple

from .errors import EmptyMaskError


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in pixel coordinates (left, top, width, height)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box extent must be >= 1 px, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"box origin must be non-negative, got ({self.x}, {self.y})")

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def normalized(self, frame_w: int, frame_h: int) -> Tuple[float, float, float, float]:
        """(x/W, y/H, w/W, h/H), each in [0, 1] for a box inside the frame."""
        return (self.x / frame_w, self.y / frame_h, self.w / frame_w, self.h / frame_h)

    def contains_box(self, other: "Box") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and other.right <= self.right
            and other.bottom <= self.bottom
        )

    def contains_point(self, px: int, py: int) -> bool:
        return self.x <= px < self.right and self.y <= py < self.bottom

    def fits_in_frame(self, frame_w: int, frame_h: int) -> bool:
        return self.right <= frame_w and self.bottom <= frame_h


def box_intersection(a: Box, b: Box) -> Optional[Box]:
    """Maximal box contained in both, or None when they do not overlap.

    Touching edges share no pixels under the half-open convention.
    """
    x = max(a.x, b.x)
    y = max(a.y, b.y)
    right = min(a.right, b.right)
    bottom = min(a.bottom, b.bottom)
    if right <= x or bottom <= y:
        return None
    return Box(x, y, right - x, bottom - y)


def boxes_overlap(a: Box, b: Box) -> bool:
    return box_intersection(a, b) is not None


@dataclass(frozen=True)
class Mask:
    """Segment mask as an explicit set of (x, y) pixel coordinates."""

    width: int
    height: int
    pixels: FrozenSet[Tuple[int, int]]

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("mask dimensions must be positive")
        for px, py in self.pixels:
            if not (0 <= px < self.width and 0 <= py < self.height):
                raise ValueError(f"mask pixel ({px}, {py}) outside {self.width}x{self.height}")

    @classmethod
    def from_pixels(cls, width: int, height: int, pixels: Iterable[Tuple[int, int]]) -> "Mask":
        return cls(width=width, height=height, pixels=frozenset(pixels))

    def __len__(self) -> int:
        return len(self.pixels)


def mask_tight_box(mask: Mask) -> Box:
    """Smallest box containing every mask pixel."""
    if not mask.pixels:
        raise EmptyMaskError("cannot compute tight box of an empty mask")
    xs = [p[0] for p in mask.pixels]
    ys = [p[1] for p in mask.pixels]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    return Box(x0, y0, x1 - x0 + 1, y1 - y0 + 1)
