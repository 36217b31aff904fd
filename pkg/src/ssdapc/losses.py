"""SSD training objective as plain evaluable functions (no gradients)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .matching import BACKGROUND, MatchResult

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class LossBreakdown:
    classification: float
    localization: float
    total: float
    num_positive: int
    empty: bool = False  # no positives, total forced to 0


def softmax(logits, axis: int = -1) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def _log(p) -> np.ndarray:
    return np.log(np.maximum(p, LOG_FLOOR))


def classification_loss(Zhat, Z, pos, neg, background: int = BACKGROUND,
                        neg_pos_ratio: Optional[float] = None) -> float:
    """Cross-entropy over positives plus background log-loss over negatives.

    ``neg_pos_ratio`` keeps only the hardest ``ratio * |pos|`` negatives; it
    is off by default, in which case every negative contributes.
    """
    Zhat = np.asarray(Zhat, dtype=float)
    Z = np.asarray(Z, dtype=float)
    pos = np.asarray(pos, dtype=int)
    neg = np.asarray(neg, dtype=int)
    positive_term = -np.sum(Z[pos] * _log(Zhat[pos]))
    neg_losses = -_log(Zhat[neg, background - 1])
    if neg_pos_ratio is not None:
        keep = int(neg_pos_ratio * len(pos))
        neg_losses = np.sort(neg_losses)[::-1][:keep]
    return float(positive_term + np.sum(neg_losses))


def smooth_l1(x) -> float:
    """Smooth L1 summed over all elements of ``x``."""
    a = np.abs(np.asarray(x, dtype=float))
    return float(np.sum(np.where(a < 1.0, 0.5 * a * a, a - 0.5)))


def smooth_l1_grad(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < 1.0, x, np.sign(x))


def localization_loss(Bhat, B, pos) -> float:
    Bhat = np.asarray(Bhat, dtype=float)
    B = np.asarray(B, dtype=float)
    if Bhat.shape != B.shape:
        raise ValueError(f"shape mismatch {Bhat.shape} vs {B.shape}")
    pos = np.asarray(pos, dtype=int)
    return smooth_l1(Bhat[pos] - B[pos])


def total_loss(Zhat, Bhat, match: MatchResult, alpha: float = 1.0,
               background: int = BACKGROUND,
               neg_pos_ratio: Optional[float] = None) -> LossBreakdown:
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    cls = classification_loss(Zhat, match.Z, match.pos, match.neg, background, neg_pos_ratio)
    loc = localization_loss(Bhat, match.B, match.pos)
    n = len(match.pos)
    if n == 0:
        return LossBreakdown(cls, loc, 0.0, 0, empty=True)
    return LossBreakdown(cls, loc, (cls + alpha * loc) / n, n)
