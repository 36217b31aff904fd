"""Threshold matching of default boxes against ground-truth objects."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Box, iou_matrix

BACKGROUND = 1


@dataclass(frozen=True)
class GroundTruthObject:
    label: int  # 1-based class id, 1 is background
    box: Box

    def __post_init__(self):
        if int(self.label) <= BACKGROUND:
            raise ValueError(f"label {self.label} is not an object class")


@dataclass
class MatchResult:
    """One-hot class targets ``Z`` (n x l), offset targets ``B`` (n x 4) and
    the sorted 0-based index arrays of positive and negative default boxes."""

    Z: np.ndarray
    B: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    assigned: np.ndarray  # gt index per default box, -1 for negatives

    @property
    def num_positive(self) -> int:
        return len(self.pos)


def match(defaults, gts: Sequence[GroundTruthObject], num_classes: int,
          threshold: float = 0.5) -> MatchResult:
    """Assign each default box the ground truth it overlaps most.

    A box is positive iff its best overlap reaches ``threshold``; ties between
    ground truths go to the lowest index. ``B`` holds ``gt - default`` offsets
    so that decoding a perfect prediction reproduces the ground truth.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    boxes = np.asarray(getattr(defaults, "boxes", defaults), dtype=float)
    n = len(boxes)
    if n < 1:
        raise ValueError("no default boxes")
    Z = np.zeros((n, num_classes))
    B = np.zeros((n, 4))
    assigned = np.full(n, -1, dtype=int)
    if not gts:
        return MatchResult(Z, B, np.array([], dtype=int), np.arange(n), assigned)
    for g in gts:
        if g.label > num_classes:
            raise ValueError(f"label {g.label} exceeds num_classes={num_classes}")

    gt_boxes = np.array([g.box.as_array() for g in gts])
    overlaps = iou_matrix(boxes, gt_boxes)
    best = np.argmax(overlaps, axis=1)  # first maximum -> lowest gt index
    best_overlap = overlaps[np.arange(n), best]
    positive = best_overlap >= threshold

    pos = np.flatnonzero(positive)
    labels = np.array([g.label for g in gts])
    Z[pos, labels[best[pos]] - 1] = 1.0
    B[pos] = gt_boxes[best[pos]] - boxes[pos]
    assigned[pos] = best[pos]
    return MatchResult(Z, B, pos, np.flatnonzero(~positive), assigned)
