"""Appearance features: patch extraction and HOG descriptors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Box

LUMA = np.array([0.299, 0.587, 0.114])


class EmptyPatchError(ValueError):
    pass


@dataclass
class ImageRaster:
    """Row-major intensities in [0, 1], shape ``(height, width, channels)``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, 1|3) raster, got {data.shape}")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def gray(self) -> np.ndarray:
        if self.channels == 1:
            return self.data[:, :, 0]
        return self.data @ LUMA


@dataclass(frozen=True)
class HogConfig:
    patch_size: int = 64
    cell_size: int = 8
    block_size: int = 2  # cells per block side
    block_stride: int = 1  # in cells
    bins: int = 9
    eps: float = 1e-5
    clip: float = 0.2

    def __post_init__(self):
        if self.patch_size % self.cell_size:
            raise ValueError("patch_size must be divisible by cell_size")
        if self.block_size > self.patch_size // self.cell_size:
            raise ValueError("block larger than the patch")

    @property
    def cells(self) -> int:
        return self.patch_size // self.cell_size

    @property
    def blocks(self) -> int:
        return (self.cells - self.block_size) // self.block_stride + 1

    @property
    def length(self) -> int:
        return self.blocks ** 2 * self.block_size ** 2 * self.bins


def _resample_axis(lo: float, hi: float, size: int, limit: int):
    # centre-aligned sampling; scale 1 over the full axis is the identity
    pos = lo + (np.arange(size) + 0.5) * (hi - lo) / size - 0.5
    pos = np.clip(pos, 0.0, limit - 1)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, limit - 1)
    return i0, i1, pos - i0


def extract_patch(image: ImageRaster, box, patch_size: int = 64) -> ImageRaster:
    """Crop ``box`` (clipped to the image) and resample it bilinearly to a
    square grayscale patch."""
    if not isinstance(box, Box):
        box = Box.from_array(box)
    c = box.to_corners()
    x0, x1 = max(c.xmin, 0.0) * image.width, min(c.xmax, 1.0) * image.width
    y0, y1 = max(c.ymin, 0.0) * image.height, min(c.ymax, 1.0) * image.height
    if not (x1 > x0 and y1 > y0):
        raise EmptyPatchError(f"empty patch for box {box.as_tuple()}")
    gray = image.gray()
    xi0, xi1, fx = _resample_axis(x0, x1, patch_size, image.width)
    yi0, yi1, fy = _resample_axis(y0, y1, patch_size, image.height)
    top = gray[yi0][:, xi0] * (1 - fx) + gray[yi0][:, xi1] * fx
    bottom = gray[yi1][:, xi0] * (1 - fx) + gray[yi1][:, xi1] * fx
    return ImageRaster((top * (1 - fy)[:, None] + bottom * fy[:, None])[:, :, None])


def hog(patch, config: HogConfig = HogConfig()) -> np.ndarray:
    """HOG descriptor of a single-channel ``patch_size`` square patch.

    Unsigned orientations, bin centres at multiples of 180/bins degrees,
    votes split linearly between the two nearest bins, L2-Hys block norm.
    """
    img = patch.gray() if isinstance(patch, ImageRaster) else np.asarray(patch, dtype=float)
    if img.shape != (config.patch_size, config.patch_size):
        raise ValueError(f"patch shape {img.shape} does not match patch_size {config.patch_size}")

    padded = np.pad(img, 1, mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    magnitude = np.hypot(gx, gy)
    angle = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)

    width = 180.0 / config.bins
    position = angle / width
    lower = np.floor(position).astype(int) % config.bins
    upper = (lower + 1) % config.bins
    frac = position - np.floor(position)

    n, cs = config.cells, config.cell_size
    cell_of = np.arange(config.patch_size) // cs
    flat_cell = (cell_of[:, None] * n + cell_of[None, :]).ravel()
    hist = np.zeros(n * n * config.bins)
    np.add.at(hist, flat_cell * config.bins + lower.ravel(), (magnitude * (1 - frac)).ravel())
    np.add.at(hist, flat_cell * config.bins + upper.ravel(), (magnitude * frac).ravel())
    hist = hist.reshape(n, n, config.bins)

    bs, stride = config.block_size, config.block_stride
    out = []
    for by in range(config.blocks):
        for bx in range(config.blocks):
            v = hist[by * stride:by * stride + bs, bx * stride:bx * stride + bs].ravel()
            v = v / np.sqrt(np.sum(v * v) + config.eps ** 2)
            v = np.minimum(v, config.clip)
            v = v / np.sqrt(np.sum(v * v) + config.eps ** 2)
            out.append(v)
    return np.concatenate(out)


def appearance_similarity(a, b) -> float:
    """Negative squared Euclidean distance between two descriptors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"descriptor length mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return -float(d @ d)


def describe_boxes(image: ImageRaster, boxes, config: HogConfig = HogConfig()) -> np.ndarray:
    """HOG descriptors for each row of an ``(n, 4)`` box array."""
    boxes = np.atleast_2d(np.asarray(boxes, dtype=float))
    out = np.empty((len(boxes), config.length))
    for i, b in enumerate(boxes):
        out[i] = hog(extract_patch(image, b, config.patch_size), config)
    return out
