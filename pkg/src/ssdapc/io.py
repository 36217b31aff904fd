"""File formats: detection dumps, annotations, final detections, images, config.

All tabular files are JSON lines whose first line is a header naming the
class vocabulary (index 1, i.e. ``classes[0]``, is the background). Floats
are written with Python's shortest round-trip repr, so save/load is lossless.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from .anchors import AnchorConfig
from .clustering import ApcParams
from .evaluation import EvalConfig
from .features import HogConfig, ImageRaster
from .suppression import ApcSuppressionConfig, Detection, DetectionSet


class FormatError(ValueError):
    """Raised for malformed input files; ``line`` is 1-based when known."""

    def __init__(self, message: str, path=None, line: int = None):
        where = f"{path}:" if path is not None else ""
        where += f"{line}: " if line is not None else (" " if where else "")
        super().__init__(f"{where}{message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class Annotation:
    image_id: str
    label: str
    box: Tuple[float, float, float, float]


# --------------------------------------------------------------------- json lines

def _dumps(obj) -> str:
    return json.dumps(obj, separators=(", ", ": "), allow_nan=False)


def _read_lines(path) -> List[Tuple[int, str]]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read file: {exc.strerror}", path) from exc
    out = []
    for number, chunk in enumerate(raw.split(b"\n"), start=1):
        try:
            text = chunk.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("invalid UTF-8", path, number) from exc
        if text.strip():
            out.append((number, text))
    return out


def _parse(text: str, path, number: int) -> dict:
    try:
        obj = json.loads(text)
    except ValueError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", path, number) from exc
    if not isinstance(obj, dict):
        raise FormatError("expected a JSON object", path, number)
    return obj


def _real(value, what: str, path, number: int) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise FormatError(f"{what} must be a finite number", path, number)
    return float(value)


def _reals(values, length: int, what: str, path, number: int) -> List[float]:
    if not isinstance(values, list) or len(values) != length:
        raise FormatError(f"{what} must be a list of {length} numbers", path, number)
    return [_real(v, what, path, number) for v in values]


def _string(value, what: str, path, number: int) -> str:
    if not isinstance(value, str) or not value:
        raise FormatError(f"{what} must be a non-empty string", path, number)
    return value


def _header(lines, path, kind: str) -> List[str]:
    if not lines:
        raise FormatError("missing header line", path, 1)
    number, text = lines[0]
    head = _parse(text, path, number)
    if head.get("kind") != kind:
        raise FormatError(f"header kind must be {kind!r}", path, number)
    classes = head.get("classes")
    if (not isinstance(classes, list) or len(classes) < 2
            or not all(isinstance(c, str) and c for c in classes)
            or len(set(classes)) != len(classes)):
        raise FormatError("header 'classes' must list at least two distinct names", path, number)
    if "num_classes" in head and head["num_classes"] != len(classes):
        raise FormatError("num_classes disagrees with the class list", path, number)
    return classes


def _write_lines(path, header: dict, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps(header) + "\n")
        for rec in records:
            fh.write(_dumps(rec) + "\n")


def _check_keys(obj: dict, required: Sequence[str], path, number: int) -> None:
    missing = [k for k in required if k not in obj]
    if missing:
        raise FormatError(f"missing keys {missing}", path, number)


# ------------------------------------------------------------------ detection dumps

def save_dump(path, classes: Sequence[str], sets: Iterable[DetectionSet]) -> None:
    """Write raw detector rows (``scores`` over all classes, decoded ``box``)."""
    classes = list(classes)

    def records():
        for ds in sets:
            if ds.num_classes != len(classes):
                raise ValueError(f"{ds.image_id}: {ds.num_classes} scores per row, expected {len(classes)}")
            for s, b in zip(ds.scores, ds.boxes):
                yield {"image_id": ds.image_id, "scores": [float(v) for v in s], "box": [float(v) for v in b]}

    _write_lines(path, {"kind": "detections", "num_classes": len(classes), "classes": classes}, records())


def load_dump(path) -> Tuple[List[str], List[DetectionSet]]:
    lines = _read_lines(path)
    classes = _header(lines, path, "detections")
    l = len(classes)
    grouped: Dict[str, Tuple[list, list]] = {}
    for number, text in lines[1:]:
        rec = _parse(text, path, number)
        _check_keys(rec, ("image_id", "scores", "box"), path, number)
        image_id = _string(rec["image_id"], "image_id", path, number)
        scores = _reals(rec["scores"], l, "scores", path, number)
        if any(s < 0.0 or s > 1.0 for s in scores):
            raise FormatError("scores must lie in [0, 1]", path, number)
        box = _reals(rec["box"], 4, "box", path, number)
        s_list, b_list = grouped.setdefault(image_id, ([], []))
        s_list.append(scores)
        b_list.append(box)
    sets = [DetectionSet(k, np.array(s, dtype=float).reshape(-1, l), np.array(b, dtype=float).reshape(-1, 4))
            for k, (s, b) in grouped.items()]
    return classes, sets


# -------------------------------------------------------------------- annotations

def save_annotations(path, classes: Sequence[str], annotations: Iterable[Annotation]) -> None:
    classes = list(classes)
    _write_lines(path, {"kind": "annotations", "num_classes": len(classes), "classes": classes},
                 ({"image_id": a.image_id, "label": a.label, "box": [float(v) for v in a.box]}
                  for a in annotations))


def load_annotations(path) -> Tuple[List[str], List[Annotation]]:
    lines = _read_lines(path)
    classes = _header(lines, path, "annotations")
    out = []
    for number, text in lines[1:]:
        rec = _parse(text, path, number)
        _check_keys(rec, ("image_id", "label", "box"), path, number)
        image_id = _string(rec["image_id"], "image_id", path, number)
        label = _string(rec["label"], "label", path, number)
        if label not in classes[1:]:
            raise FormatError(f"label {label!r} is not an object class of the header", path, number)
        box = _reals(rec["box"], 4, "box", path, number)
        if box[2] < 0 or box[3] < 0:
            raise FormatError("box width and height must be non-negative", path, number)
        out.append(Annotation(image_id, label, tuple(box)))
    return classes, out


# --------------------------------------------------------------- final detections

def save_detections(path, classes: Sequence[str], by_image: Mapping[str, Sequence[Detection]]) -> None:
    """Write final detections, images in sorted id order."""
    classes = list(classes)

    def records():
        for image_id in sorted(by_image):
            for d in by_image[image_id]:
                yield {"image_id": image_id, "label": classes[d.class_id - 1], "class_id": d.class_id,
                       "confidence": d.confidence, "box": list(d.box), "row": d.row}

    _write_lines(path, {"kind": "final_detections", "num_classes": len(classes), "classes": classes}, records())


def load_detections(path) -> Tuple[List[str], Dict[str, List[Detection]]]:
    lines = _read_lines(path)
    classes = _header(lines, path, "final_detections")
    out: Dict[str, List[Detection]] = {}
    for number, text in lines[1:]:
        rec = _parse(text, path, number)
        _check_keys(rec, ("image_id", "label", "confidence", "box"), path, number)
        image_id = _string(rec["image_id"], "image_id", path, number)
        label = _string(rec["label"], "label", path, number)
        if label not in classes[1:]:
            raise FormatError(f"label {label!r} is not an object class of the header", path, number)
        conf = _real(rec["confidence"], "confidence", path, number)
        box = tuple(_reals(rec["box"], 4, "box", path, number))
        row = rec.get("row", 0)
        if isinstance(row, bool) or not isinstance(row, int):
            raise FormatError("row must be an integer", path, number)
        out.setdefault(image_id, []).append(Detection(classes.index(label) + 1, conf, box, row))
    return classes, out


# ------------------------------------------------------------------------ images

def save_ppm(path, pixels: np.ndarray) -> None:
    """Write an ``(h, w, 3)`` uint8 array as binary PPM."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim == 2:
        pixels = np.repeat(pixels[:, :, None], 3, axis=2)
    h, w, _ = pixels.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(pixels.tobytes())


def _ppm_tokens(data: bytes, count: int, path) -> Tuple[List[int], int]:
    tokens = []
    pos = 2
    while len(tokens) < count:
        while pos < len(data) and (data[pos:pos + 1].isspace() or data[pos:pos + 1] == b"#"):
            if data[pos:pos + 1] == b"#":
                end = data.find(b"\n", pos)
                pos = len(data) if end < 0 else end
            pos += 1
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("malformed PPM header", path)
        tokens.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("malformed PPM header", path)
    return tokens, pos + 1


def load_image(path) -> ImageRaster:
    """Load a binary PPM (P6, maxval 255) or an 8-bit PNG, scaled to [0, 1]."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read image: {exc.strerror}", path) from exc
    if data[:2] == b"P6":
        (w, h, maxval), offset = _ppm_tokens(data, 3, path)
        if maxval != 255 or w < 1 or h < 1:
            raise FormatError("only 8-bit PPM with positive size is supported", path)
        body = data[offset:offset + w * h * 3]
        if len(body) != w * h * 3:
            raise FormatError("truncated PPM pixel data", path)
        pixels = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
        return ImageRaster(pixels / 255.0)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _load_png(path)
    raise FormatError(f"unsupported image format (magic bytes {data[:4]!r})", path)


def _load_png(path) -> ImageRaster:
    from PIL import Image

    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("L", "RGB"):
                raise FormatError(f"unsupported PNG mode {im.mode}", path)
            pixels = np.asarray(im, dtype=np.uint8)
    except FormatError:
        raise
    except Exception as exc:  # Pillow raises assorted types on corrupt data
        raise FormatError(f"corrupt PNG: {exc}", path) from exc
    return ImageRaster(pixels / 255.0)


def find_image(images_dir, image_id: str):
    for ext in (".ppm", ".png"):
        candidate = Path(images_dir) / f"{image_id}{ext}"
        if candidate.is_file():
            return candidate
    return None


# ------------------------------------------------------------------------ config

@dataclass(frozen=True)
class SuppressionSection:
    appearance_weight: float = 1.0
    confidence_floor: float = 0.01
    per_class: bool = True
    preference_mode: str = "scaled"
    similarity_convention: str = "negated"
    nms_iou_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.nms_iou_threshold <= 1.0:
            raise ValueError("nms_iou_threshold must be in (0, 1]")
        ApcSuppressionConfig(self.appearance_weight, self.confidence_floor, self.per_class,
                             self.preference_mode, self.similarity_convention)


@dataclass(frozen=True)
class Config:
    anchors: AnchorConfig = field(default_factory=lambda: AnchorConfig((38, 19, 10, 5, 3, 1)))
    hog: HogConfig = field(default_factory=HogConfig)
    apc: ApcParams = field(default_factory=ApcParams)
    suppression: SuppressionSection = field(default_factory=SuppressionSection)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def apc_suppression(self) -> ApcSuppressionConfig:
        s = self.suppression
        return ApcSuppressionConfig(s.appearance_weight, s.confidence_floor, s.per_class,
                                    s.preference_mode, s.similarity_convention, self.apc)


_SECTIONS = {"anchors": AnchorConfig, "hog": HogConfig, "apc": ApcParams,
             "suppression": SuppressionSection, "eval": EvalConfig}


def _section(name: str, cls, values, path):
    if not isinstance(values, dict):
        raise FormatError(f"section {name!r} must be an object", path)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise FormatError(f"unknown keys in {name!r}: {unknown}", path)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid {name!r} section: {exc}", path) from exc


def config_from_dict(data, path=None) -> Config:
    if not isinstance(data, dict):
        raise FormatError("config must be a JSON object", path)
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise FormatError(f"unknown config sections: {unknown}", path)
    return Config(**{k: _section(k, _SECTIONS[k], v, path) for k, v in data.items()})


def load_config(path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"cannot read config: {exc}", path) from exc
    try:
        data = json.loads(text)
    except ValueError as exc:
        raise FormatError(f"invalid JSON: {exc}", path) from exc
    return config_from_dict(data, path)


def config_to_dict(config: Config) -> dict:
    out = {}
    for name in _SECTIONS:
        section = getattr(config, name)
        values = {}
        for f in fields(section):
            v = getattr(section, f.name)
            values[f.name] = list(v) if isinstance(v, tuple) else v
        out[name] = values
    return out

