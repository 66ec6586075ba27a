"""Streaming (mini-batch) k-means with per-centroid learning rates.

Each agent owns one :class:`CentroidTable`. Counts are cumulative over the
whole run and never reset, so the learning rate of a centroid keeps shrinking
and cluster indices stay meaningful while the encoder drifts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np


class NotInitializedError(RuntimeError):
    pass


class TooFewSamplesError(ValueError):
    pass


@dataclass
class CentroidTable:
    k: int
    d: int
    centroids: np.ndarray = None
    counts: np.ndarray = None
    initialized: bool = False
    skipped: int = 0  # non-finite inputs dropped by minibatch_update

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.centroids is None:
            self.centroids = np.zeros((self.k, self.d))
        if self.counts is None:
            self.counts = np.zeros(self.k, dtype=np.int64)

    def copy(self) -> "CentroidTable":
        return CentroidTable(self.k, self.d, self.centroids.copy(), self.counts.copy(),
                             self.initialized, self.skipped)


def squared_distances(x, centroids):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    diff = x[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def kmeans_objective(samples, centroids) -> float:
    """Sum of squared distances from each sample to its nearest centroid."""
    return float(squared_distances(samples, centroids).min(axis=1).sum())


def init_centroids(samples, k, rng) -> CentroidTable:
    """k-means++ seeding.

    D^2 sampling never re-picks a point equal to an existing centroid, so the
    centroids are distinct whenever the samples hold at least ``k`` distinct
    values. With fewer distinct values the remaining centroids are drawn
    uniformly (duplicates then receive no assignments under lowest-index ties).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("samples must be a 2-D array")
    if len(x) < k:
        raise TooFewSamplesError(
            f"need at least k={k} samples to initialize, got {len(x)}; defer initialization")
    chosen = [int(rng.integers(len(x)))]
    closest = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(len(x), p=closest / total))
        else:
            idx = int(rng.integers(len(x)))
        chosen.append(idx)
        closest = np.minimum(closest, np.sum((x - x[idx]) ** 2, axis=1))
    return CentroidTable(k, x.shape[1], x[chosen].copy(), np.zeros(k, dtype=np.int64), True)


def assign(x, table: CentroidTable):
    """Index of the nearest centroid (squared Euclidean, lowest index on ties).

    Accepts a single vector (returns ``int``) or a 2-D batch (returns array).
    """
    if not table.initialized:
        raise NotInitializedError("centroid table has not been initialized")
    x = np.asarray(x, dtype=np.float64)
    idx = np.argmin(squared_distances(x, table.centroids), axis=1)
    return int(idx[0]) if x.ndim == 1 else idx


def minibatch_update(table: CentroidTable, batch) -> CentroidTable:
    """Sequential per-point update ``c <- (1 - 1/n_c) c + (1/n_c) x``.

    Points are processed in order; each assignment sees the centroids as left
    by the previous point. Updates ``table`` in place and returns it.
    """
    if not table.initialized:
        raise NotInitializedError("centroid table has not been initialized")
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if len(batch) == 0:
        raise ValueError("empty batch")
    cents, counts = table.centroids, table.counts
    for x in batch:
        if not np.all(np.isfinite(x)):
            table.skipped += 1
            continue
        diff = cents - x
        c = int(np.argmin(np.einsum("kd,kd->k", diff, diff)))
        counts[c] += 1
        eta = 1.0 / counts[c]
        cents[c] = (1.0 - eta) * cents[c] + eta * x
    return table


def index_stability(before: CentroidTable, after: CentroidTable, probes) -> float:
    """Fraction of ``probes`` whose assignment is the same under both tables."""
    a = assign(np.atleast_2d(probes), before)
    b = assign(np.atleast_2d(probes), after)
    return float(np.mean(a == b))


@dataclass
class LloydResult:
    table: CentroidTable
    objectives: List[float] = field(default_factory=list)
    labels: Optional[np.ndarray] = None


def lloyd(samples, k, iterations, rng) -> LloydResult:
    """Full-batch Lloyd iterations from ``k`` distinct random samples.

    An empty cluster is re-seeded at the sample farthest from its current
    centroid, which keeps the objective non-increasing. ``objectives[0]`` is
    the objective of the initial centroids, one entry per iteration after.
    """
    x = np.asarray(samples, dtype=np.float64)
    if len(x) < k:
        raise TooFewSamplesError(f"need at least k={k} samples, got {len(x)}")
    _, first = np.unique(x, axis=0, return_index=True)
    pool = np.sort(first) if len(first) >= k else np.arange(len(x))
    cents = x[rng.choice(pool, size=k, replace=False)].copy()
    objectives = [kmeans_objective(x, cents)]
    labels = None
    for _ in range(iterations):
        dist = squared_distances(x, cents)
        labels = np.argmin(dist, axis=1)
        nearest = dist[np.arange(len(x)), labels]
        for j in range(k):
            members = labels == j
            if members.any():
                cents[j] = x[members].mean(axis=0)
            else:
                far = int(np.argmax(nearest))
                cents[j] = x[far]
                nearest[far] = 0.0
        objectives.append(kmeans_objective(x, cents))
    counts = np.bincount(np.argmin(squared_distances(x, cents), axis=1), minlength=k)
    return LloydResult(CentroidTable(k, x.shape[1], cents, counts.astype(np.int64), True),
                       objectives, labels)
