"""Affinity propagation on a dense similarity matrix.

No noise is added to the similarities; every argmax breaks ties toward the
lowest index so results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ApcParams:
    damping: float = 0.5
    max_iter: int = 200
    convergence_window: int = 15
    refine: bool = True

    def __post_init__(self):
        if not 0.5 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0.5, 1)")
        if self.max_iter < 1 or self.convergence_window < 1:
            raise ValueError("max_iter and convergence_window must be positive")


@dataclass
class ClusterResult:
    assignments: np.ndarray  # exemplar index per point
    exemplars: np.ndarray  # sorted
    iterations: int
    converged: bool

    def net_similarity(self, S) -> float:
        S = np.asarray(S, dtype=float)
        return float(np.sum(S[np.arange(len(self.assignments)), self.assignments]))


def validate_similarity(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] < 1:
        raise ValueError(f"similarity matrix must be square and non-empty, got {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ValueError("similarity matrix has non-finite entries")
    return S


def responsibilities(S: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Undamped responsibility update ``S - max_{k != j}(S + A)`` per row."""
    q = len(S)
    AS = S + A
    rows = np.arange(q)
    first = np.argmax(AS, axis=1)
    top = AS[rows, first]
    AS[rows, first] = -np.inf
    second = np.max(AS, axis=1)
    R = S - top[:, None]
    R[rows, first] = S[rows, first] - second
    return R


def availabilities(R: np.ndarray) -> np.ndarray:
    """Undamped availability update from responsibilities."""
    q = len(R)
    idx = np.arange(q)
    Rp = np.maximum(R, 0.0)
    Rp[idx, idx] = R[idx, idx]
    col = Rp.sum(axis=0)
    A = col[None, :] - Rp  # r(j,j) + sum over k not in {i, j} of r+(k, j)
    diag = A[idx, idx].copy()  # sum over k != j of r+(k, j)
    A = np.minimum(A, 0.0)
    A[idx, idx] = diag
    return A


def step(S, R, A, damping: float = 0.5):
    """One damped sweep: responsibilities from the old availabilities, then
    availabilities from the damped responsibilities."""
    S = np.asarray(S, dtype=float)
    R_new = damping * R + (1.0 - damping) * responsibilities(S, A)
    A_new = damping * A + (1.0 - damping) * availabilities(R_new)
    return R_new, A_new


def _assign(S: np.ndarray, exemplars: np.ndarray) -> np.ndarray:
    assignments = exemplars[np.argmax(S[:, exemplars], axis=1)]
    assignments[exemplars] = exemplars
    return assignments


def refine(S: np.ndarray, exemplars: np.ndarray) -> np.ndarray:
    """Move each cluster's exemplar to the member with the largest summed
    similarity from its cluster mates, then return the new sorted set."""
    assignments = _assign(S, exemplars)
    chosen = []
    for e in exemplars:
        members = np.flatnonzero(assignments == e)
        chosen.append(members[np.argmax(S[np.ix_(members, members)].sum(axis=0))])
    return np.unique(chosen)


def run(S, params: ApcParams = ApcParams()) -> ClusterResult:
    """Cluster the points of similarity matrix ``S`` (preferences on the diagonal).

    Convergence means the candidate exemplar set ``{i : a(i,i) + r(i,i) > 0}``
    held still for ``convergence_window`` consecutive sweeps. If the set is
    empty at the end, the single point with the largest ``a(i,i) + r(i,i)``
    becomes the only exemplar.
    """
    S = validate_similarity(S)
    q = len(S)
    if q == 1:
        return ClusterResult(np.array([0]), np.array([0]), 0, True)

    R = np.zeros_like(S)
    A = np.zeros_like(S)
    idx = np.arange(q)
    previous = None
    stable = 0
    converged = False
    it = 0
    for it in range(1, params.max_iter + 1):
        R, A = step(S, R, A, params.damping)
        candidates = (A[idx, idx] + R[idx, idx]) > 0
        if previous is not None and np.array_equal(candidates, previous):
            stable += 1
        else:
            stable = 0
        previous = candidates
        if stable >= params.convergence_window:
            converged = True
            break

    evidence = A[idx, idx] + R[idx, idx]
    exemplars = np.flatnonzero(evidence > 0)
    if len(exemplars) == 0:
        exemplars = np.array([int(np.argmax(evidence))])
    if params.refine:
        exemplars = refine(S, exemplars)
    return ClusterResult(_assign(S, exemplars), exemplars, it, converged)
