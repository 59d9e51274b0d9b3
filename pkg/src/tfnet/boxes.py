"""Shared box geometry types."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Box2D:
    """Axis-aligned pixel box in center format."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box dimensions must be positive, got w={self.w}, h={self.h}")

    @property
    def x1(self) -> float:
        return self.cx - self.w / 2

    @property
    def y1(self) -> float:
        return self.cy - self.h / 2

    @property
    def x2(self) -> float:
        return self.cx + self.w / 2

    @property
    def y2(self) -> float:
        return self.cy + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "Box2D":
        return cls((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)


@dataclass
class GroundTruthObject:
    """One labeled object; DontCare regions carry class_id == -1."""

    box: Box2D
    class_id: int
    occlusion: int = 0
    truncation: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.truncation <= 1.0:
            raise ValueError(f"truncation must be in [0, 1], got {self.truncation}")

    @property
    def height_px(self) -> float:
        return self.box.h

    @property
    def is_ignore_region(self) -> bool:
        return self.class_id < 0


@dataclass
class Detection:
    """A decoded prediction with its provenance on the head grid."""

    box: Box2D
    class_id: int
    confidence: float
    cell: tuple[int, int] = (0, 0)
    anchor_index: int = 0
    image_id: str = ""
    class_probs: list[float] = field(default_factory=list)
