"""Default (anchor) box generation over a pyramid of square feature maps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

DEFAULT_ASPECT_RATIOS = (2.0, 3.0, 1.0 / 2.0, 1.0 / 3.0)


@dataclass(frozen=True)
class AnchorConfig:
    """Feature-map layout and scale range.

    ``s_extra`` overrides the scale one step past the last map, which the
    extra square box of the last map needs. Left as ``None`` it continues the
    arithmetic progression (or is 1.0 for a single map).
    """

    feature_map_sizes: Tuple[int, ...]
    s_min: float = 0.2
    s_max: float = 0.9
    aspect_ratios: Tuple[float, ...] = DEFAULT_ASPECT_RATIOS
    s_extra: Optional[float] = None

    def __post_init__(self):
        if any(isinstance(f, bool) or int(f) != f for f in self.feature_map_sizes):
            raise ValueError("feature map sizes must be integers")
        object.__setattr__(self, "feature_map_sizes", tuple(int(f) for f in self.feature_map_sizes))
        object.__setattr__(self, "aspect_ratios", tuple(float(a) for a in self.aspect_ratios))
        if len(self.feature_map_sizes) < 1:
            raise ValueError("at least one feature map is required")
        if any(f < 1 for f in self.feature_map_sizes):
            raise ValueError("feature map sizes must be positive")
        if not 0.0 < self.s_min <= self.s_max <= 1.0:
            raise ValueError("scales must satisfy 0 < s_min <= s_max <= 1")
        if any(not a > 0 for a in self.aspect_ratios):
            raise ValueError("aspect ratios must be positive")
        if self.s_extra is not None and not self.s_extra > 0:
            raise ValueError("s_extra must be positive")

    @property
    def num_maps(self) -> int:
        return len(self.feature_map_sizes)

    @property
    def boxes_per_location(self) -> int:
        return len(self.aspect_ratios) + 2

    def expected_count(self) -> int:
        return self.boxes_per_location * sum(f * f for f in self.feature_map_sizes)


# SSD-300 feature map layout with the default scale range.
SSD300 = AnchorConfig(feature_map_sizes=(38, 19, 10, 5, 3, 1))


@dataclass
class DefaultBoxSet:
    boxes: np.ndarray  # (n, 4) centroid form
    per_map_ranges: List[Tuple[int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.boxes)


def _raw_scale(k: int, config: AnchorConfig) -> float:
    p = config.num_maps
    if k == p + 1:
        if config.s_extra is not None:
            return config.s_extra
        if p == 1:
            return 1.0
        return config.s_max + (config.s_max - config.s_min) / (p - 1)
    if p == 1:
        return config.s_min
    return config.s_min + (config.s_max - config.s_min) * (k - 1) / (p - 1)


def scale(k: int, config: AnchorConfig) -> Tuple[float, float]:
    """Scale of map ``k`` (1-based) and the geometric mean with the next scale."""
    if not 1 <= k <= config.num_maps:
        raise ValueError(f"map index {k} outside 1..{config.num_maps}")
    s_k = _raw_scale(k, config)
    return s_k, math.sqrt(s_k * _raw_scale(k + 1, config))


def centroids(size: int) -> np.ndarray:
    """Cell centres of a ``size x size`` map as an ``(size**2, 2)`` array, row-major."""
    if size < 1:
        raise ValueError("feature map size must be positive")
    ticks = (np.arange(size) + 0.5) / size
    ii, jj = np.meshgrid(ticks, ticks, indexing="ij")
    return np.stack([ii.ravel(), jj.ravel()], axis=1)


def generate(config: AnchorConfig) -> DefaultBoxSet:
    """Tile default boxes over every map.

    Order: maps, then centroids, then one box per aspect ratio followed by the
    two square boxes ``s_k`` and ``s'_k``.
    """
    chunks = []
    ranges = []
    start = 0
    for k, size in enumerate(config.feature_map_sizes, start=1):
        s_k, s_prime = scale(k, config)
        shapes = [(s_k * math.sqrt(a), s_k / math.sqrt(a)) for a in config.aspect_ratios]
        shapes += [(s_k, s_k), (s_prime, s_prime)]
        wh = np.asarray(shapes, dtype=float)
        cxy = centroids(size)
        block = np.empty((len(cxy), len(wh), 4))
        block[:, :, :2] = cxy[:, None, :]
        block[:, :, 2:] = wh[None, :, :]
        block = block.reshape(-1, 4)
        chunks.append(block)
        ranges.append((start, start + len(block)))
        start += len(block)
    return DefaultBoxSet(np.concatenate(chunks, axis=0), ranges)


def scales(config: AnchorConfig) -> List[float]:
    return [scale(k, config)[0] for k in range(1, config.num_maps + 1)]


def aspect_ratio_of(index: int, config: AnchorConfig) -> Optional[float]:
    """Generating aspect ratio of box ``index`` or ``None`` for the two squares."""
    slot = index % config.boxes_per_location
    if slot < len(config.aspect_ratios):
        return config.aspect_ratios[slot]
    return None

