"""Box geometry in normalized image coordinates.

Boxes live in centroid form ``[cx, cy, w, h]``; corner form
``[xmin, ymin, xmax, ymax]`` is used only for intersection arithmetic.
Array helpers accept ``(n, 4)`` centroid arrays and are what the rest of
the package uses in hot loops.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np


@dataclass(frozen=True)
class CornerBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if self.xmin > self.xmax or self.ymin > self.ymax:
            raise ValueError(f"inverted corners: {self}")

    def to_box(self) -> "Box":
        return Box.from_corners(self.xmin, self.ymin, self.xmax, self.ymax)


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    w: float
    h: float

    @classmethod
    def from_corners(cls, xmin, ymin, xmax, ymax) -> "Box":
        if xmin > xmax or ymin > ymax:
            raise ValueError("inverted corners")
        return cls((xmin + xmax) / 2.0, (ymin + ymax) / 2.0, xmax - xmin, ymax - ymin)

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "Box":
        cx, cy, w, h = (float(v) for v in values)
        return cls(cx, cy, w, h)

    def to_corners(self) -> CornerBox:
        return CornerBox(self.cx - self.w / 2.0, self.cy - self.h / 2.0,
                         self.cx + self.w / 2.0, self.cy + self.h / 2.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=float)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h)

    @property
    def area(self) -> float:
        return max(self.w, 0.0) * max(self.h, 0.0)


def to_corners(boxes: np.ndarray) -> np.ndarray:
    """Convert ``(..., 4)`` centroid boxes to corner form."""
    boxes = np.asarray(boxes, dtype=float)
    half = boxes[..., 2:] / 2.0
    return np.concatenate([boxes[..., :2] - half, boxes[..., :2] + half], axis=-1)


def from_corners(corners: np.ndarray) -> np.ndarray:
    corners = np.asarray(corners, dtype=float)
    return np.concatenate([(corners[..., :2] + corners[..., 2:]) / 2.0,
                           corners[..., 2:] - corners[..., :2]], axis=-1)


def iou_matrix(boxes1: np.ndarray, boxes2: np.ndarray) -> np.ndarray:
    """Pairwise overlap ratio between ``(n, 4)`` and ``(m, 4)`` centroid boxes.

    Pairs whose union is empty (both boxes degenerate) get 0.
    """
    b1 = to_corners(np.atleast_2d(boxes1))
    b2 = to_corners(np.atleast_2d(boxes2))
    lo = np.maximum(b1[:, None, :2], b2[None, :, :2])
    hi = np.minimum(b1[:, None, 2:], b2[None, :, 2:])
    inter = np.prod(np.clip(hi - lo, 0.0, None), axis=-1)
    area1 = np.prod(np.clip(b1[:, 2:] - b1[:, :2], 0.0, None), axis=-1)
    area2 = np.prod(np.clip(b2[:, 2:] - b2[:, :2], 0.0, None), axis=-1)
    union = area1[:, None] + area2[None, :] - inter
    out = np.zeros_like(union)
    np.divide(inter, union, out=out, where=union > 0)
    return np.clip(out, 0.0, 1.0)


def _as_array(box) -> np.ndarray:
    if isinstance(box, Box):
        return box.as_array()
    return np.asarray(box, dtype=float)


def iou(a, b) -> float:
    """Intersection over union of two boxes (``Box`` or length-4 arrays)."""
    return float(iou_matrix(_as_array(a)[None], _as_array(b)[None])[0, 0])


def jaccard_distance(a, b) -> float:
    return 1.0 - iou(a, b)


def encode(gt, default) -> np.ndarray:
    """Regression target that :func:`decode` maps back onto ``gt``."""
    return _as_array(gt) - _as_array(default)


def decode_array(offsets: np.ndarray, defaults: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized decode. Returns ``(boxes, clamped)`` where ``clamped`` marks
    rows whose width or height went negative and was clamped to 0."""
    boxes = np.asarray(offsets, dtype=float) + np.asarray(defaults, dtype=float)
    boxes = np.atleast_2d(boxes).copy()
    clamped = np.any(boxes[:, 2:] < 0, axis=1)
    boxes[:, 2:] = np.maximum(boxes[:, 2:], 0.0)
    return boxes, clamped


def decode(offsets, default) -> Box:
    box, _ = decode_checked(offsets, default)
    return box


def decode_checked(offsets, default) -> Tuple[Box, bool]:
    boxes, clamped = decode_array(_as_array(offsets)[None], _as_array(default)[None])
    return Box.from_array(boxes[0]), bool(clamped[0])
