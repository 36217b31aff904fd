"""Seeded synthetic scenes standing in for a real detection corpus.

A scene is a flat grey image with textured rectangles (one sinusoidal
grating per object), its annotations, and a dump of noisy detector rows.
Contested pairs put a smaller object over a corner of a larger one of the
same class so that their best detection boxes overlap at IoU 0.5-0.8: the
case where greedy NMS drops the smaller object.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .geometry import iou_matrix
from .io import Annotation
from .suppression import DetectionSet

CLASSES = ("background", "equip-1", "equip-2", "equip-3")


@dataclass(frozen=True)
class SceneSpec:
    width: int = 192
    height: int = 192
    contested_pairs: int = 1
    singles: Tuple[int, int] = (1, 2)  # inclusive range of isolated objects
    single_size: Tuple[float, float] = (0.15, 0.28)
    large_size: Tuple[float, float] = (0.30, 0.42)
    pair_iou: Tuple[float, float] = (0.5, 0.8)  # required for the top detection boxes
    boxes_per_object: int = 3
    false_positives: int = 1
    classes: Tuple[str, ...] = CLASSES


@dataclass
class SyntheticScene:
    image_id: str
    seed: int
    pixels: np.ndarray  # (h, w, 3) uint8
    annotations: List[Annotation]
    detections: DetectionSet


@dataclass
class _Object:
    class_id: int
    box: np.ndarray  # centroid form
    angle: float
    period: float
    phase: float
    level: float


def _corners(box) -> Tuple[float, float, float, float]:
    cx, cy, w, h = box
    return cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2


def _texture(obj: _Object, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    u = xs * np.cos(obj.angle) + ys * np.sin(obj.angle)
    return obj.level + 0.35 * np.sin(2 * np.pi * u / obj.period + obj.phase)


def _render(objects: Sequence[_Object], width: int, height: int) -> np.ndarray:
    img = np.full((height, width), 0.5)
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    for obj in objects:
        x0, y0, x1, y1 = _corners(obj.box)
        c0, c1 = int(round(x0 * width)), int(round(x1 * width))
        r0, r1 = int(round(y0 * height)), int(round(y1 * height))
        c0, r0 = max(c0, 0), max(r0, 0)
        c1, r1 = min(c1, width), min(r1, height)
        img[r0:r1, c0:c1] = _texture(obj, xs[r0:r1, c0:c1], ys[r0:r1, c0:c1])
    gray = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    return np.repeat(gray[:, :, None], 3, axis=2)


def _new_object(rng, class_id: int, box, angle=None) -> _Object:
    return _Object(class_id, np.asarray(box, dtype=float),
                   float(rng.uniform(0, np.pi)) if angle is None else float(angle),
                   float(rng.uniform(5.0, 9.0)), float(rng.uniform(0, 2 * np.pi)),
                   float(rng.uniform(0.3, 0.7)))


def _pair(rng, spec: SceneSpec):
    """Large box plus a smaller one over its corner, poking out slightly."""
    while True:
        w = rng.uniform(*spec.large_size)
        h = w * rng.uniform(0.8, 1.25)
        cx = rng.uniform(w / 2 + 0.08, 1 - w / 2 - 0.08)
        cy = rng.uniform(h / 2 + 0.08, 1 - h / 2 - 0.08)
        scale = rng.uniform(0.78, 0.86)
        sw, sh = w * scale, h * scale
        sx, sy = rng.choice([-1.0, 1.0], size=2)
        poke = rng.uniform(0.0, 0.06)
        scx = cx + sx * ((w - sw) / 2 + poke * sw)
        scy = cy + sy * ((h - sh) / 2 + poke * sh)
        large = np.array([cx, cy, w, h])
        small = np.array([scx, scy, sw, sh])
        overlap = iou_matrix(large, small)[0, 0]
        if 0.55 < overlap < 0.75:
            return large, small


def _place_single(rng, spec: SceneSpec, taken: List[np.ndarray]):
    for _ in range(200):
        w = rng.uniform(*spec.single_size)
        h = w * rng.uniform(0.7, 1.4)
        box = np.array([rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h])
        grown = box * np.array([1, 1, 1.3, 1.3])
        if not taken or np.all(iou_matrix(grown, np.array(taken)) == 0):
            return box
    return None


def _scores(rng, class_id: int, confidence: float, num_classes: int) -> np.ndarray:
    """Probability row with ``confidence`` on ``class_id`` and a softmax of
    noise spread over the rest."""
    while True:
        rest = np.exp(rng.normal(0.0, 0.5, num_classes - 1))
        rest = rest / rest.sum() * (1.0 - confidence)
        if np.all(rest < confidence):
            return np.insert(rest, class_id - 1, confidence)


def _jitter(rng, box: np.ndarray, sigma: float) -> np.ndarray:
    cx, cy, w, h = box
    return np.array([cx + rng.normal(0, sigma) * w, cy + rng.normal(0, sigma) * h,
                     w * np.exp(rng.normal(0, sigma)), h * np.exp(rng.normal(0, sigma))])


def synth_scene(seed: int, spec: SceneSpec = SceneSpec(), image_id: str = None) -> SyntheticScene:
    rng = np.random.default_rng(seed)
    image_id = image_id or f"scene-{seed}"
    num_classes = len(spec.classes)
    objects: List[_Object] = []
    top_conf = {}
    contested = []

    for _ in range(spec.contested_pairs):
        for _attempt in range(100):
            large, small = _pair(rng, spec)
            if all(np.all(iou_matrix(b * np.array([1, 1, 1.2, 1.2]), o.box) == 0)
                   for b in (large, small) for o in objects):
                break
        class_id = int(rng.integers(2, num_classes + 1))
        angle = rng.uniform(0, np.pi)
        big = _new_object(rng, class_id, large, angle)
        little = _new_object(rng, class_id, small, angle + np.pi / 2 + rng.uniform(-0.3, 0.3))
        objects += [big, little]
        c_big = rng.uniform(0.8, 0.95)
        top_conf[id(big)] = c_big
        top_conf[id(little)] = c_big - rng.uniform(0.08, 0.25)
        contested.append((big, little))

    for _ in range(int(rng.integers(spec.singles[0], spec.singles[1] + 1))):
        box = _place_single(rng, spec, [o.box * np.array([1, 1, 1.2, 1.2]) for o in objects])
        if box is None:
            break
        obj = _new_object(rng, int(rng.integers(2, num_classes + 1)), box)
        objects.append(obj)
        top_conf[id(obj)] = rng.uniform(0.6, 0.95)

    scores, boxes = [], []
    for obj in objects:
        conf = top_conf[id(obj)]
        for k in range(spec.boxes_per_object):
            sigma = 0.01 if k == 0 else 0.04
            if k == 0 and any(obj is little for _, little in contested):
                box = _top_small_box(rng, obj, contested)
            else:
                box = _jitter(rng, obj.box, sigma)
            c = conf if k == 0 else conf * rng.uniform(0.6, 0.95)
            scores.append(_scores(rng, obj.class_id, c, num_classes))
            boxes.append(box)
    for _ in range(spec.false_positives):
        w = rng.uniform(0.1, 0.25)
        boxes.append(np.array([rng.uniform(w / 2, 1 - w / 2), rng.uniform(w / 2, 1 - w / 2), w, w]))
        scores.append(_scores(rng, int(rng.integers(2, num_classes + 1)), rng.uniform(0.3, 0.5), num_classes))

    pixels = _render(objects, spec.width, spec.height)
    annotations = [Annotation(image_id, spec.classes[o.class_id - 1], tuple(float(v) for v in o.box))
                   for o in objects]
    dets = DetectionSet(image_id, np.array(scores).reshape(-1, num_classes), np.array(boxes).reshape(-1, 4))
    return SyntheticScene(image_id, seed, pixels, annotations, dets)


def _top_small_box(rng, little: _Object, contested) -> np.ndarray:
    big = next(b for b, s in contested if s is little)
    for _ in range(100):
        box = _jitter(rng, little.box, 0.01)
        if 0.5 < iou_matrix(box, big.box)[0, 0] < 0.8:
            return box
    return little.box.copy()


def synth_corpus(num_scenes: int, seed: int, spec: SceneSpec = SceneSpec()) -> List[SyntheticScene]:
    """``num_scenes`` scenes whose seeds are spawned from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(num_scenes)
    return [synth_scene(int(child.generate_state(1)[0]), spec, image_id=f"scene-{k:04d}")
            for k, child in enumerate(children)]


def pair_fixture(seed: int = 0) -> SyntheticScene:
    """A single contested pair and nothing else."""
    spec = SceneSpec(contested_pairs=1, singles=(0, 0), false_positives=0)
    return synth_scene(seed, spec, image_id="pair")
