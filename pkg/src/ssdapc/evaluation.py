"""PASCAL-VOC style average precision and NMS-vs-APC comparison reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .geometry import iou_matrix

AP_MODES = ("all_points", "eleven_point")


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.5
    ap_mode: str = "all_points"

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must be in (0, 1]")
        if self.ap_mode not in AP_MODES:
            raise ValueError(f"ap_mode must be one of {AP_MODES}")


@dataclass(frozen=True)
class ScoredBox:
    """One detection of a single class, tagged with its image."""

    image_id: str
    confidence: float
    box: Tuple[float, float, float, float]
    row: int = 0


@dataclass
class ClassResult:
    ap: Optional[float]  # None when the class has no ground truth
    num_gt: int
    num_det: int
    tp: int
    recall: List[float] = field(default_factory=list)
    precision: List[float] = field(default_factory=list)


def rank(dets: Sequence[ScoredBox]) -> List[ScoredBox]:
    return sorted(dets, key=lambda d: (-d.confidence, d.image_id, d.row))


def match_detections(dets: Sequence[ScoredBox], gts: Mapping[str, np.ndarray],
                     iou_threshold: float = 0.5) -> np.ndarray:
    """TP flags for detections in ranked order.

    Each detection looks at its best-overlapping ground truth in the same
    image; it is a TP if that overlap reaches the threshold and the ground
    truth is still unclaimed, otherwise an FP.
    """
    claimed = {k: np.zeros(len(v), dtype=bool) for k, v in gts.items()}
    tp = np.zeros(len(dets), dtype=bool)
    for k, d in enumerate(dets):
        boxes = gts.get(d.image_id)
        if boxes is None or len(boxes) == 0:
            continue
        overlaps = iou_matrix(np.asarray(d.box)[None], boxes)[0]
        j = int(np.argmax(overlaps))
        if overlaps[j] >= iou_threshold and not claimed[d.image_id][j]:
            claimed[d.image_id][j] = True
            tp[k] = True
    return tp


def precision_recall(tp: np.ndarray, num_gt: int) -> Tuple[np.ndarray, np.ndarray]:
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    recall = ctp / max(num_gt, 1)
    precision = ctp / np.maximum(ctp + cfp, 1)
    return recall, precision


def ap_from_curve(recall: np.ndarray, precision: np.ndarray, mode: str = "all_points") -> float:
    if mode == "eleven_point":
        total = 0.0
        for t in np.linspace(0.0, 1.0, 11):
            mask = recall >= t
            total += float(np.max(precision[mask])) if np.any(mask) else 0.0
        return total / 11.0
    if mode != "all_points":
        raise ValueError(f"unknown AP mode {mode!r}")
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1]) + 1
    return float(np.sum((mrec[steps] - mrec[steps - 1]) * mpre[steps]))


def evaluate_class(dets: Sequence[ScoredBox], gts: Mapping[str, np.ndarray],
                   config: EvalConfig = EvalConfig()) -> ClassResult:
    num_gt = int(sum(len(v) for v in gts.values()))
    ranked = rank(dets)
    if num_gt == 0:
        return ClassResult(None, 0, len(ranked), 0)
    if not ranked:
        return ClassResult(0.0, num_gt, 0, 0)
    tp = match_detections(ranked, gts, config.iou_threshold)
    recall, precision = precision_recall(tp, num_gt)
    ap = ap_from_curve(recall, precision, config.ap_mode)
    return ClassResult(ap, num_gt, len(ranked), int(tp.sum()), recall.tolist(), precision.tolist())


def average_precision(dets: Sequence[ScoredBox], gts: Mapping[str, np.ndarray],
                      config: EvalConfig = EvalConfig()) -> Optional[float]:
    """AP of one class; ``None`` when there is no ground truth for it."""
    return evaluate_class(dets, gts, config).ap


def mean_ap(aps) -> float:
    """Mean over the defined (non-``None``) per-class APs."""
    values = [a for a in (aps.values() if isinstance(aps, Mapping) else aps) if a is not None]
    if not values:
        raise ValueError("no class has a defined AP")
    return float(np.mean(values))


@dataclass
class EvalReport:
    classes: List[str]  # object class names, background excluded
    results: Dict[str, ClassResult]
    config: EvalConfig = EvalConfig()
    label: str = ""

    @property
    def aps(self) -> Dict[str, Optional[float]]:
        return {c: self.results[c].ap for c in self.classes}

    @property
    def mean_average_precision(self) -> float:
        return mean_ap(self.aps)

    @property
    def undefined(self) -> List[str]:
        return [c for c in self.classes if self.results[c].ap is None]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "config": {"iou_threshold": self.config.iou_threshold, "ap_mode": self.config.ap_mode},
            "classes": {
                c: {"ap": r.ap, "num_gt": r.num_gt, "num_det": r.num_det, "tp": r.tp}
                for c, r in ((c, self.results[c]) for c in self.classes)
            },
            "mAP": self.mean_average_precision,
            "undefined": self.undefined,
        }


def evaluate(detections: Mapping[str, Sequence[ScoredBox]], ground_truth: Mapping[str, Mapping[str, np.ndarray]],
             classes: Sequence[str], config: EvalConfig = EvalConfig(), label: str = "") -> EvalReport:
    """Per-class AP over a corpus.

    ``detections[class]`` is the flat list of that class's detections across
    images; ``ground_truth[class][image_id]`` an ``(k, 4)`` box array.
    """
    results = {c: evaluate_class(detections.get(c, []), ground_truth.get(c, {}), config) for c in classes}
    return EvalReport(list(classes), results, config, label)


@dataclass
class Comparison:
    label_a: str
    label_b: str
    per_class: Dict[str, Tuple[Optional[float], Optional[float], Optional[float]]]
    map_a: float
    map_b: float

    @property
    def improvement_points(self) -> float:
        """mAP difference in percentage points (b minus a)."""
        return 100.0 * (self.map_b - self.map_a)

    def to_dict(self) -> dict:
        return {
            "a": self.label_a,
            "b": self.label_b,
            "per_class": {c: {"a": a, "b": b, "delta": d} for c, (a, b, d) in self.per_class.items()},
            "mAP_a": self.map_a,
            "mAP_b": self.map_b,
            "delta_mAP": self.map_b - self.map_a,
            "improvement_points": self.improvement_points,
        }


def compare(a: EvalReport, b: EvalReport) -> Comparison:
    if list(a.classes) != list(b.classes):
        raise ValueError(f"class sets differ: {a.classes} vs {b.classes}")
    per_class = {}
    for c in a.classes:
        x, y = a.results[c].ap, b.results[c].ap
        per_class[c] = (x, y, None if x is None or y is None else y - x)
    return Comparison(a.label or "a", b.label or "b", per_class,
                      a.mean_average_precision, b.mean_average_precision)


def _pct(v: Optional[float]) -> str:
    return "-" if v is None else f"{100.0 * v:.2f}"


def format_table(reports: Sequence[EvalReport], comparison: Optional[Comparison] = None) -> str:
    """Plain-text table: one row per method, AP (%) per class, mAP (%) and,
    for a pair, the improvement in points."""
    classes = list(reports[0].classes)
    header = ["Method"] + classes + ["mAP (%)"]
    if comparison is not None:
        header.append("Improvement")
    rows = []
    for k, r in enumerate(reports):
        row = [r.label or f"method-{k + 1}"] + [_pct(r.results[c].ap) for c in classes] + [_pct(r.mean_average_precision)]
        if comparison is not None:
            row.append(f"{comparison.improvement_points:+.2f}" if k == len(reports) - 1 else "")
        rows.append(row)
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    fmt = lambda cells: "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |"  # noqa: E731
    return "\n".join([line, fmt(header), line] + [fmt(r) for r in rows] + [line])


def report_from_dict(data: dict) -> EvalReport:
    """Rebuild an :class:`EvalReport` (without curves) from :meth:`EvalReport.to_dict`."""
    cfg = EvalConfig(**data.get("config", {}))
    classes = list(data["classes"])
    results = {c: ClassResult(v["ap"], v["num_gt"], v["num_det"], v["tp"]) for c, v in data["classes"].items()}
    return EvalReport(classes, results, cfg, data.get("label", ""))
