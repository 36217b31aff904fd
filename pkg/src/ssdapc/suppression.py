"""Turning raw detector rows into final detections.

Two selectors are provided: greedy per-class NMS and the clustering route,
where boxes are grouped by affinity propagation over a similarity mixing
box overlap with HOG appearance, and each cluster's exemplar is kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .clustering import ApcParams, run
from .features import HogConfig, ImageRaster, describe_boxes
from .geometry import iou_matrix
from .matching import BACKGROUND

PREFERENCE_MODES = ("raw", "scaled")
CONVENTIONS = ("literal", "negated")


@dataclass
class DetectionSet:
    """Rows of per-class confidences (``n x l``) and decoded boxes (``n x 4``)."""

    image_id: str
    scores: np.ndarray
    boxes: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        self.boxes = np.asarray(self.boxes, dtype=float).reshape(-1, 4)
        if self.scores.ndim != 2:
            raise ValueError("scores must be an (n, l) array")
        if len(self.scores) != len(self.boxes):
            raise ValueError("scores and boxes disagree on row count")
        if np.any(self.scores < 0) or np.any(self.scores > 1):
            raise ValueError("confidences must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.boxes)

    @property
    def num_classes(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True)
class Detection:
    class_id: int  # 1-based, never the background
    confidence: float
    box: Tuple[float, float, float, float]
    row: int


@dataclass(frozen=True)
class ApcSuppressionConfig:
    appearance_weight: float = 1.0
    confidence_floor: float = 0.01
    per_class: bool = True
    preference_mode: str = "scaled"
    similarity_convention: str = "negated"
    apc: ApcParams = field(default_factory=ApcParams)

    def __post_init__(self):
        if not 0.0 <= self.appearance_weight <= 1.0:
            raise ValueError("appearance_weight must lie in [0, 1]")
        if self.preference_mode not in PREFERENCE_MODES:
            raise ValueError(f"preference_mode must be one of {PREFERENCE_MODES}")
        if self.similarity_convention not in CONVENTIONS:
            raise ValueError(f"similarity_convention must be one of {CONVENTIONS}")


def _candidates(dets: DetectionSet, floor: float, background: int) -> Tuple[np.ndarray, np.ndarray]:
    """Rows that survive background removal and the confidence floor, with
    their argmax class (1-based)."""
    if len(dets) == 0:
        return np.array([], dtype=int), np.array([], dtype=int)
    classes = np.argmax(dets.scores, axis=1) + 1
    conf = np.max(dets.scores, axis=1)
    keep = (classes != background) & (conf >= floor)
    rows = np.flatnonzero(keep)
    return rows, classes[rows]


def _by_confidence(rows: np.ndarray, conf: np.ndarray) -> np.ndarray:
    # descending confidence, ties to the lower row index
    order = np.lexsort((rows, -conf))
    return rows[order]


def nms(dets: DetectionSet, class_id: int, iou_threshold: float = 0.5,
        confidence_floor: float = 0.01, background: int = BACKGROUND) -> List[Detection]:
    """Greedy suppression among the rows whose top class is ``class_id``."""
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must be in (0, 1]")
    rows, classes = _candidates(dets, confidence_floor, background)
    rows = rows[classes == class_id]
    conf = dets.scores[rows, class_id - 1]
    order = _by_confidence(rows, conf)
    overlaps = iou_matrix(dets.boxes[order], dets.boxes[order]) if len(order) else None

    alive = np.ones(len(order), dtype=bool)
    kept = []
    for k in range(len(order)):
        if not alive[k]:
            continue
        kept.append(order[k])
        alive &= ~(overlaps[k] > iou_threshold)
    return [_detection(dets, r, class_id) for r in kept]


def nms_all(dets: DetectionSet, iou_threshold: float = 0.5, confidence_floor: float = 0.01,
            background: int = BACKGROUND) -> List[Detection]:
    out = []
    for c in range(1, dets.num_classes + 1):
        if c != background:
            out.extend(nms(dets, c, iou_threshold, confidence_floor, background))
    return out


def _detection(dets: DetectionSet, row: int, class_id: int) -> Detection:
    return Detection(int(class_id), float(dets.scores[row, class_id - 1]),
                     tuple(float(v) for v in dets.boxes[row]), int(row))


def preference(scores) -> np.ndarray:
    """Per-row maximum class confidence."""
    return np.max(np.atleast_2d(np.asarray(scores, dtype=float)), axis=1)


def scale_preferences(rho: np.ndarray, off_diagonal: np.ndarray) -> np.ndarray:
    """Map confidences affinely onto ``[min, median]`` of the off-diagonal
    similarities, keeping their order. A constant ``rho`` lands on the median."""
    if off_diagonal.size == 0:
        return rho.astype(float)
    lo = float(np.min(off_diagonal))
    hi = float(np.median(off_diagonal))
    span = float(np.max(rho) - np.min(rho))
    if span == 0.0:
        return np.full(len(rho), hi)
    return lo + (rho - np.min(rho)) / span * (hi - lo)


def similarity_matrix(boxes, rho, descriptors=None, appearance_weight: float = 1.0,
                      preference_mode: str = "scaled",
                      similarity_convention: str = "negated") -> np.ndarray:
    """Pairwise similarity of predicted boxes with preferences on the diagonal.

    Off the diagonal: ``(loc + weight * app) / 2`` where ``loc`` is the
    Jaccard distance (``literal``) or its negation (``negated``) and ``app``
    the negative squared HOG distance. ``descriptors`` may be omitted when
    ``appearance_weight`` is 0.
    """
    boxes = np.atleast_2d(np.asarray(boxes, dtype=float))
    rho = np.asarray(rho, dtype=float)
    q = len(boxes)
    loc = 1.0 - iou_matrix(boxes, boxes)
    if similarity_convention == "negated":
        loc = -loc
    elif similarity_convention != "literal":
        raise ValueError(f"unknown similarity convention {similarity_convention!r}")
    S = loc.copy()
    if appearance_weight != 0.0 and q > 1:
        if descriptors is None:
            raise ValueError("descriptors are required when appearance_weight > 0")
        d = np.asarray(descriptors, dtype=float)
        dist2 = np.stack([np.sum((d - row) ** 2, axis=1) for row in d])
        S = S - appearance_weight * dist2
    S = S / 2.0
    off = ~np.eye(q, dtype=bool)
    if preference_mode == "scaled":
        diag = scale_preferences(rho, S[off])
    elif preference_mode == "raw":
        diag = rho
    else:
        raise ValueError(f"unknown preference mode {preference_mode!r}")
    S[np.arange(q), np.arange(q)] = diag
    return S


def _cluster_rows(dets: DetectionSet, rows: np.ndarray, image: Optional[ImageRaster],
                  config: ApcSuppressionConfig, hog_config: HogConfig) -> np.ndarray:
    rho = preference(dets.scores[rows])
    descriptors = None
    if config.appearance_weight != 0.0 and len(rows) > 1:
        if image is None:
            raise ValueError(f"image {dets.image_id!r} is required when appearance_weight > 0")
        descriptors = describe_boxes(image, dets.boxes[rows], hog_config)
    S = similarity_matrix(dets.boxes[rows], rho, descriptors, config.appearance_weight,
                          config.preference_mode, config.similarity_convention)
    result = run(S, config.apc)
    return rows[result.exemplars]


def apc_suppress(dets: DetectionSet, image: Optional[ImageRaster] = None,
                 config: ApcSuppressionConfig = ApcSuppressionConfig(),
                 hog_config: HogConfig = HogConfig(),
                 background: int = BACKGROUND) -> List[Detection]:
    """Keep the exemplars of an affinity-propagation clustering of the rows.

    Rows are presented to the clustering in descending confidence order so
    index-based tie breaking favours confident boxes. ``image`` may be
    ``None`` when the appearance weight is 0.
    """
    rows, classes = _candidates(dets, config.confidence_floor, background)
    if len(rows) == 0:
        return []
    conf = np.max(dets.scores[rows], axis=1)
    groups = [np.unique(classes)] if not config.per_class else [[c] for c in np.unique(classes)]
    out = []
    for group in groups:
        mask = np.isin(classes, group)
        ordered = _by_confidence(rows[mask], conf[mask])
        for r in sorted(_cluster_rows(dets, ordered, image, config, hog_config)):
            out.append(_detection(dets, r, int(np.argmax(dets.scores[r]) + 1)))
    return sorted(out, key=lambda d: (d.class_id, -d.confidence, d.row))
