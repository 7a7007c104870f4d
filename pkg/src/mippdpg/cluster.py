"""Trajectory clustering of embedded nodes.

Pipeline: centre and scale each embedding dimension over all ``N * M`` rows,
smooth each node's trajectory over time with a box kernel, take Frobenius
distances between node trajectories, and cluster with average linkage.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .embed import Embedding
from .errors import ArgumentError, NumericalError

__all__ = [
    "TrajectoryMatrix",
    "ClusterResult",
    "box_smooth",
    "normalize_and_smooth",
    "trajectory_distances",
    "pairwise_distances",
    "agglomerative_cluster",
    "cut_tree",
    "choose_k",
    "compare_partitions",
]


@dataclass(frozen=True)
class TrajectoryMatrix:
    """Smoothed, normalised trajectories, ``data[i]`` is node ``i``'s ``(M, d)`` matrix."""

    data: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    window: int

    @property
    def n_nodes(self):
        return self.data.shape[0]


def box_smooth(series, window: int, axis: int = 0):
    """Centred moving average of odd width ``window`` along ``axis``.

    Near the ends the window is truncated and the average taken over the
    points actually inside it.
    """
    x = np.asarray(series, dtype=float)
    n = x.shape[axis]
    if window < 1 or window % 2 == 0:
        raise ArgumentError(f"window must be a positive odd integer, got {window}")
    if window > n:
        raise ArgumentError(f"window {window} exceeds series length {n}")
    if window == 1:
        return x.copy()
    x = np.moveaxis(x, axis, 0)
    half = window // 2
    csum = np.concatenate([np.zeros((1,) + x.shape[1:]), np.cumsum(x, axis=0)])
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    width = (hi - lo).reshape((-1,) + (1,) * (x.ndim - 1))
    out = (csum[hi] - csum[lo]) / width
    return np.moveaxis(out, 0, axis)


def normalize_and_smooth(embedding, window: int = 5, n_nodes: Optional[int] = None,
                         n_bins: Optional[int] = None) -> TrajectoryMatrix:
    """Normalise each dimension over all rows, then box-smooth each node over bins.

    ``embedding`` is an ``Embedding`` (its left factor is used) or an
    ``(N * M, d)`` array with ``n_nodes`` and ``n_bins`` given.
    """
    if isinstance(embedding, Embedding):
        data, n, M = embedding.left, embedding.n_nodes, embedding.n_bins
    else:
        data = np.asarray(embedding, dtype=float)
        n, M = n_nodes, n_bins
        if n is None or M is None or data.shape[0] != n * M:
            raise ArgumentError("array input needs n_nodes and n_bins with n_nodes * n_bins rows")
    if window < 1 or window % 2 == 0 or window > M:
        raise ArgumentError(f"window must be odd and in [1, {M}], got {window}")
    center = data.mean(axis=0)
    scale = data.std(axis=0)
    zero = np.flatnonzero(scale == 0)
    if len(zero):
        raise NumericalError(f"embedding dimension {int(zero[0])} has zero variance")
    normed = ((data - center) / scale).reshape(M, n, -1)
    smoothed = box_smooth(normed, window, axis=0)
    return TrajectoryMatrix(np.ascontiguousarray(smoothed.transpose(1, 0, 2)), center, scale, window)


def pairwise_distances(F, block: int = 16):
    """Euclidean distances between rows of ``F``; exactly symmetric with zero diagonal."""
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    D = np.zeros((n, n))
    for start in range(0, n, block):
        stop = min(start + block, n)
        diff = F[start:stop, None, :] - F[None, start:, :]
        D[start:stop, start:] = np.sqrt(np.einsum("abk,abk->ab", diff, diff))
    upper = np.triu(D, 1)
    return upper + upper.T


def trajectory_distances(T) -> np.ndarray:
    """Frobenius distances ``||T_i - T_j||_F`` between node trajectories."""
    data = T.data if isinstance(T, TrajectoryMatrix) else np.asarray(T, dtype=float)
    return pairwise_distances(data.reshape(data.shape[0], -1))


@dataclass
class ClusterResult:
    """Cut labels plus the full merge tree.

    ``linkage`` rows are ``(id_a, id_b, height, size)`` with leaves numbered
    ``0..N-1`` and the cluster made by merge ``k`` numbered ``N + k``.
    """

    labels: np.ndarray
    linkage: np.ndarray
    k: int

    @property
    def heights(self):
        return self.linkage[:, 2]


def _upgma(D):
    n = D.shape[0]
    dist = np.array(D, dtype=float)
    np.fill_diagonal(dist, np.inf)
    active = np.ones(n, dtype=bool)
    size = np.ones(n)
    ident = np.arange(n)  # tree id of the cluster represented by each slot
    merges = np.zeros((max(n - 1, 0), 4))
    # mask below-diagonal so argmin scans pairs (a, b) with a < b in lexicographic order
    lower = np.tril(np.ones((n, n), dtype=bool))
    dist[lower] = np.inf
    full = np.array(D, dtype=float)
    for step in range(n - 1):
        k = int(np.argmin(dist))
        a, b = divmod(k, n)
        h = dist[a, b]
        ia, ib = ident[a], ident[b]
        merges[step] = (min(ia, ib), max(ia, ib), h, size[a] + size[b])
        # unweighted average: size-weighted mean of the two clusters' distances
        new = (size[a] * full[a] + size[b] * full[b]) / (size[a] + size[b])
        full[a] = new
        full[:, a] = new
        size[a] += size[b]
        active[b] = False
        ident[a] = n + step
        full[b] = np.inf
        full[:, b] = np.inf
        dist[b, :] = np.inf
        dist[:, b] = np.inf
        row = np.where(active & (np.arange(n) > a), full[a], np.inf)
        col = np.where(active & (np.arange(n) < a), full[:, a], np.inf)
        dist[a, :] = row
        dist[:, a] = col
    return merges


def cut_tree(linkage, n: int, k: int):
    """Labels of the ``k``-cluster cut, numbered by first appearance in node order."""
    if not 1 <= k <= n:
        raise ArgumentError(f"k must be in [1, {n}], got {k}")
    parent = np.arange(2 * n - 1)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step in range(n - k):
        a, b = int(linkage[step, 0]), int(linkage[step, 1])
        parent[find(a)] = n + step
        parent[find(b)] = n + step
    roots = np.array([find(i) for i in range(n)])
    _, first = np.unique(roots, return_index=True)
    order = {r: lab for lab, r in enumerate(roots[np.sort(first)])}
    return np.array([order[r] for r in roots], dtype=np.int64)


def choose_k(heights, k_max: int = 10) -> int:
    """Number of clusters at the largest ratio of successive merge heights.

    Cutting at ``k`` clusters undoes the last ``k - 1`` merges; its score is
    ``h[n-k] / h[n-k-1]`` (0-based, ``n - 1`` merges).  ``0/0`` counts as 1 and
    ``x/0`` as infinite.  Ties go to the smaller ``k``.
    """
    h = np.asarray(heights, dtype=float)
    n = len(h) + 1
    k_max = min(int(k_max), n - 1)
    if k_max < 2:
        return 1
    best_k, best = 2, -1.0
    for k in range(2, k_max + 1):
        top, below = h[n - k], h[n - k - 1]
        if below == 0:
            ratio = 1.0 if top == 0 else np.inf
        else:
            ratio = top / below
        if ratio > best:
            best_k, best = k, ratio
    return best_k


def agglomerative_cluster(D, k: Optional[int] = None, k_max: int = 10) -> ClusterResult:
    """Average-linkage (UPGMA) clustering of a distance matrix.

    Each step merges the closest pair of clusters; clusters are identified by
    their lowest member index and ties go to the lexicographically smallest
    pair.  ``k=None`` picks the cut with ``choose_k``.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if D.ndim != 2 or D.shape[1] != n:
        raise ArgumentError("distance matrix must be square")
    if not np.allclose(D, D.T) or np.any(np.diag(D) != 0):
        raise ArgumentError("distance matrix must be symmetric with zero diagonal")
    linkage = _upgma(D)
    if k is None:
        k = choose_k(linkage[:, 2], k_max)
    return ClusterResult(cut_tree(linkage, n, int(k)), linkage, int(k))


def _pairs(x):
    return x * (x - 1) / 2.0


def compare_partitions(a, b) -> float:
    """Adjusted Rand index between two labelings of the same items."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ArgumentError("label vectors must be 1-d with equal length")
    n = len(a)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max(initial=-1) + 1, bi.max(initial=-1) + 1))
    np.add.at(table, (ai, bi), 1)
    index = _pairs(table).sum()
    sa = _pairs(table.sum(axis=1)).sum()
    sb = _pairs(table.sum(axis=0)).sum()
    total = _pairs(n)
    expected = sa * sb / total if total > 0 else 0.0
    maximum = 0.5 * (sa + sb)
    if maximum == expected:
        # both partitions trivial (all singletons or one block)
        return 1.0 if sa == sb else 0.0
    return float((index - expected) / (maximum - expected))
