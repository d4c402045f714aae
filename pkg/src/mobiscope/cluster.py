"""k-means with k-means++ restarts, SSE/elbow helpers and summary statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ParameterError, ShapeError, UndefinedCorrelationError

# relative slack when checking that SSE never increases between iterations
_MONOTONE_RTOL = 1e-12


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    sse: float
    seed: int
    iterations: int
    restart: int = 0
    user_ids: tuple[str, ...] = ()
    sse_history: list[float] = field(default_factory=list, repr=False)

    @property
    def assignments(self) -> dict[str, int]:
        ids = self.user_ids or tuple(str(i) for i in range(self.labels.size))
        return {uid: int(c) for uid, c in zip(ids, self.labels.tolist())}

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "sse": self.sse,
            "iterations": self.iterations,
            "centroids": self.centroids.tolist(),
            "assignments": self.assignments,
        }


def _as_matrix(vectors) -> np.ndarray:
    try:
        X = np.asarray(vectors, dtype=np.float64)
    except ValueError as exc:
        raise ShapeError("vectors must share one dimension") from exc
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-D array of vectors, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ParameterError("vectors contain non-finite values")
    return np.ascontiguousarray(X)


def restart_rng(seed: int, restart: int) -> np.random.Generator:
    """Independent PRNG stream for one restart."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(restart)]))


def kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    idx = int(rng.integers(n))
    centers[0] = X[idx]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            cum = np.cumsum(d2)
            idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            idx = min(idx, n - 1)
        centers[c] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[c]) ** 2, axis=1))
    return centers


def _update_centroids(X, labels, d2, C):
    k, dim = C.shape
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros((k, dim))
    np.add.at(sums, labels, X)
    new = C.copy()
    nonempty = counts > 0
    new[nonempty] = sums[nonempty] / counts[nonempty, None]
    if not nonempty.all():
        # reseed each empty cluster at the point worst served by its centroid
        far = d2.copy()
        for c in np.flatnonzero(~nonempty):
            p = int(np.argmax(far))
            new[c] = X[p]
            far[p] = -1.0
    return new


def lloyd(X: np.ndarray, C: np.ndarray, max_iter: int = 300, tol: float = 1e-6):
    """Run Lloyd iterations from centroids ``C``.

    Returns (centroids, labels, sse, iterations, sse_history).
    """
    labels, d2 = _kernels.assign_nearest(X, C)
    history = [float(d2.sum())]
    # absolute slack for rounding in the centroid means
    slack = _MONOTONE_RTOL * float(np.sum(X * X))
    it = 0
    for it in range(1, max_iter + 1):
        new_C = _update_centroids(X, labels, d2, C)
        shift = float(np.max(np.abs(new_C - C))) if C.size else 0.0
        C = new_C
        new_labels, d2 = _kernels.assign_nearest(X, C)
        sse = float(d2.sum())
        if sse > history[-1] * (1 + _MONOTONE_RTOL) + slack:
            raise AssertionError(f"SSE increased from {history[-1]} to {sse} at iteration {it}")
        history.append(sse)
        changed = not np.array_equal(new_labels, labels)
        labels = new_labels
        if not changed or shift < tol:
            break
    return C, labels, history[-1], it, history


def kmeans(
    vectors,
    k: int,
    seed: int = 0,
    restarts: int = 50,
    max_iter: int = 300,
    tol: float = 1e-6,
    user_ids: Sequence[str] = (),
) -> ClusterModel:
    """Best-of-``restarts`` k-means with k-means++ seeding.

    Each restart draws from its own stream derived from (seed, restart), so
    the result does not depend on evaluation order. Ties in SSE go to the
    lower restart index.
    """
    X = _as_matrix(vectors)
    n = X.shape[0]
    if k < 1 or k > n:
        raise ParameterError(f"k must be in [1, {n}], got {k}")
    if restarts < 1:
        raise ParameterError("restarts must be >= 1")
    best = None
    for r in range(restarts):
        C0 = kmeans_pp_init(X, k, restart_rng(seed, r))
        C, labels, sse, iters, hist = lloyd(X, C0, max_iter, tol)
        if best is None or sse < best.sse:
            best = ClusterModel(k, C, labels, sse, int(seed), iters, r, tuple(user_ids), hist)
    return best


@dataclass(frozen=True)
class SseCurve:
    points: tuple[tuple[int, float], ...]

    def to_list(self) -> list[list]:
        return [[k, s] for k, s in self.points]


def sse_curve(vectors, k_min: int = 1, k_max: int = 10, seed: int = 0, restarts: int = 50) -> SseCurve:
    X = _as_matrix(vectors)
    if k_min < 1 or k_max < k_min:
        raise ParameterError(f"invalid k range {k_min}:{k_max}")
    if k_max > X.shape[0]:
        raise ParameterError(f"k_max={k_max} exceeds number of vectors {X.shape[0]}")
    pts = tuple((k, kmeans(X, k, seed, restarts).sse) for k in range(k_min, k_max + 1))
    return SseCurve(pts)


def suggest_k(curve: SseCurve) -> int:
    """Elbow: the interior k farthest from the chord between the curve's ends.

    Both axes are scaled to [0, 1] first; ties resolve to the smaller k.
    """
    pts = curve.points
    if len(pts) < 3:
        raise ParameterError("suggest_k needs at least 3 curve points")
    ks = np.array([p[0] for p in pts], dtype=np.float64)
    ss = np.array([p[1] for p in pts], dtype=np.float64)
    x = (ks - ks[0]) / (ks[-1] - ks[0])
    span = ss.max() - ss.min()
    y = (ss - ss.min()) / span if span > 0 else np.zeros_like(ss)
    dx, dy = x[-1] - x[0], y[-1] - y[0]
    norm = math.hypot(dx, dy)
    dist = np.abs(dx * (y - y[0]) - dy * (x - x[0])) / norm
    best_i, best_d = 1, -1.0
    for i in range(1, len(pts) - 1):
        if dist[i] > best_d + 1e-12:
            best_i, best_d = i, dist[i]
    return int(pts[best_i][0])


# --------------------------------------------------------------------------
# statistics
# --------------------------------------------------------------------------


def _pearson(xc: np.ndarray, yc: np.ndarray) -> np.ndarray:
    num = yc @ xc
    den = np.sqrt(np.sum(yc * yc, axis=-1) * float(xc @ xc))
    return np.clip(num / den, -1.0, 1.0)


def pearson_r(x, y, perm: int = 10000, seed: int = 0) -> tuple[float, float]:
    """Sample Pearson r with a two-sided permutation p-value.

    p = (#{|r_perm| >= |r_obs|} + 1) / (perm + 1) over seeded shuffles of y.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError("x and y must be 1-D and of equal length")
    if x.size < 3:
        raise ParameterError("need at least 3 pairs")
    xc = x - x.mean()
    yc = y - y.mean()
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelationError("zero variance in x or y")
    r = float(_pearson(xc, yc))
    if perm <= 0:
        return r, float("nan")
    rng = np.random.default_rng(seed)
    shuffled = rng.permuted(np.broadcast_to(yc, (perm, yc.size)), axis=1)
    r_perm = _pearson(xc, shuffled)
    hits = int(np.count_nonzero(np.abs(r_perm) >= abs(r) * (1 - 1e-12)))
    return r, (hits + 1) / (perm + 1)


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Pair-counting adjusted Rand index between two flat labelings."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError("labelings must be 1-D and of equal length")
    n = a.size
    if n < 2:
        return 1.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def pairs(v):
        v = np.asarray(v, dtype=np.float64)
        return float(np.sum(v * (v - 1) / 2))

    sum_ij = pairs(table)
    sum_a = pairs(table.sum(axis=1))
    sum_b = pairs(table.sum(axis=0))
    total = n * (n - 1) / 2
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return (sum_ij - expected) / (max_index - expected)
