"""Runtime values bound in an execution environment.

Text, Number, Boolean and Null are plain ``str``, ``int``, ``bool`` and
``None``. Images and boxes get small frozen dataclasses. Coordinates are
pixels with the origin at the top-left corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .evallang import display as display_scalar


class BoxError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float
    score: float = 1.0

    def __post_init__(self):
        if not (0 <= self.x1 < self.x2 and 0 <= self.y1 < self.y2):
            raise BoxError(f"degenerate box {self.coords()}")
        if not (0.0 <= self.score <= 1.0) or math.isnan(self.score):
            raise BoxError(f"score {self.score} outside [0, 1]")

    def coords(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def fits(self, width: int, height: int) -> bool:
        return self.x2 <= width and self.y2 <= height

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


def iou(a: Box, b: Box) -> float:
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def clamp_box(x1, y1, x2, y2, width: int, height: int, score: float = 1.0) -> Box:
    """Clip raw coordinates to the image; raises BoxError if nothing is left."""
    x1, x2 = max(0.0, min(float(x1), width)), max(0.0, min(float(x2), width))
    y1, y2 = max(0.0, min(float(y1), height)), max(0.0, min(float(y2), height))
    return Box(x1, y1, x2, y2, float(score))


@dataclass(frozen=True)
class BoxArray:
    boxes: tuple[Box, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(self.boxes, key=lambda b: -b.score))
        object.__setattr__(self, "boxes", ordered)

    def __len__(self):
        return len(self.boxes)

    def __getitem__(self, i):
        return self.boxes[i]


@dataclass(frozen=True)
class ImageRef:
    """A handle on an image or a crop of one.

    ``id`` keys model requests; ``source`` is an optional file path and
    ``region`` the crop rectangle in source pixels.
    """

    id: str
    width: int
    height: int
    source: str | None = field(default=None, compare=False)
    region: tuple[int, int, int, int] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image {self.id!r} has empty size {self.width}x{self.height}")

    def whole_box(self, score: float = 1.0) -> Box:
        return Box(0, 0, self.width, self.height, score)

    def crop(self, box: Box) -> ImageRef:
        x1 = max(0, min(self.width, math.floor(box.x1)))
        y1 = max(0, min(self.height, math.floor(box.y1)))
        x2 = max(0, min(self.width, math.ceil(box.x2)))
        y2 = max(0, min(self.height, math.ceil(box.y2)))
        if x2 <= x1 or y2 <= y1:
            raise BoxError(f"crop {box.coords()} lies outside {self.width}x{self.height}")
        ox, oy = (self.region[0], self.region[1]) if self.region else (0, 0)
        region = (ox + x1, oy + y1, ox + x2, oy + y2)
        return ImageRef(
            f"{self.id}@{x1},{y1},{x2},{y2}", x2 - x1, y2 - y1, self.source, region
        )


@dataclass(frozen=True)
class ImageArray:
    images: tuple[ImageRef, ...] = ()

    def __len__(self):
        return len(self.images)

    def __getitem__(self, i):
        return self.images[i]


def concat_horizontal(left: ImageRef, right: ImageRef) -> ImageRef:
    """Side-by-side image at the taller height; the shorter one is padded."""
    return ImageRef(
        f"{left.id}|{right.id}",
        left.width + right.width,
        max(left.height, right.height),
        None,
    )


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:.2f}"


def display(value) -> str:
    """Human-readable form used in traces and as the RESULT answer."""
    if value is None:
        return "none"
    if isinstance(value, (bool, int, str)):
        return display_scalar(value)
    if isinstance(value, Box):
        return f"[{','.join(_fmt(c) for c in value.coords())}]@{value.score:.2f}"
    if isinstance(value, BoxArray):
        return "[" + ", ".join(display(b) for b in value.boxes) + "]"
    if isinstance(value, ImageRef):
        return f"<image {value.id} {value.width}x{value.height}>"
    if isinstance(value, ImageArray):
        return "[" + ", ".join(display(i) for i in value.images) + "]"
    return repr(value)


def kind_name(value) -> str:
    if value is None:
        return "Null"
    if isinstance(value, bool):
        return "Boolean"
    if isinstance(value, int):
        return "Number"
    if isinstance(value, str):
        return "Text"
    return type(value).__name__
