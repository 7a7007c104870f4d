"""Histogram intensity estimates and their doubly unfolded matrix layout.

The unfolded matrix has shape ``(N * M, N * L)``: block ``(m, l)`` (rows
``m*N:(m+1)*N``, columns ``l*N:(l+1)*N``) holds the bin-``m`` rates of layer
``l``.  Bin ``m`` (0-based) is the interval ``(m/M, (m+1)/M]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DataError
from .model import LatentModel
from .simulate import EventStream

__all__ = [
    "UnfoldedIntensity",
    "BinnedPositions",
    "TimeMap",
    "bin_index",
    "bin_events",
    "exact_binned_mean",
    "rebin",
    "normalize_times",
]

KINDS = ("empirical", "exact")


@dataclass(frozen=True)
class UnfoldedIntensity:
    data: np.ndarray
    n_nodes: int
    n_bins: int
    n_layers: int
    kind: str = "empirical"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"kind must be one of {KINDS}")
        shape = (self.n_nodes * self.n_bins, self.n_nodes * self.n_layers)
        if self.data.shape != shape:
            raise ArgumentError(f"unfolded matrix must have shape {shape}, got {self.data.shape}")

    @property
    def shape(self):
        return self.data.shape

    def block(self, m, layer):
        n = self.n_nodes
        return self.data[m * n:(m + 1) * n, layer * n:(layer + 1) * n]

    def counts(self):
        """Event counts behind an empirical estimate (``data / M``)."""
        return np.rint(self.data / self.n_bins).astype(np.int64)


@dataclass(frozen=True)
class BinnedPositions:
    """Stacked bin averages ``M * int_{B_m} X(t) dt``, shape ``(N * M, d)``."""

    data: np.ndarray
    n_nodes: int
    n_bins: int

    def block(self, m):
        n = self.n_nodes
        return self.data[m * n:(m + 1) * n]

    @property
    def dim(self):
        return self.data.shape[1]


def bin_index(times, n_bins):
    """0-based bin of each time under right-closed bins: first ``m`` with ``t <= (m+1)/M``."""
    edges = np.arange(1, n_bins + 1) / n_bins
    return np.searchsorted(edges, np.asarray(times, dtype=float), side="left")


def bin_events(events: EventStream, n_bins: int) -> UnfoldedIntensity:
    """Histogram estimator: ``M`` times the event count of each edge in each bin."""
    if n_bins < 1:
        raise ArgumentError("n_bins must be >= 1")
    t = events.time
    bad = np.flatnonzero(~((t > 0.0) & (t <= 1.0)))
    if len(bad):
        k = int(bad[0])
        raise DataError(f"event record {k} has time {t[k]!r} outside (0, 1]", bad.tolist())
    n, L, M = events.n_nodes, events.n_layers, n_bins
    m = bin_index(t, M)
    flat = (m * n + events.src) * (n * L) + events.layer * n + events.dst
    counts = np.bincount(flat, minlength=n * M * n * L).reshape(n * M, n * L)
    return UnfoldedIntensity(M * counts.astype(float), n, M, L, "empirical")


def exact_binned_mean(model: LatentModel, n_bins: int):
    """Exact mean of the histogram estimator and the binned positions.

    Returns ``(bar_Lambda, tilde_X)`` with ``bar_Lambda = tilde_X Y^T`` where
    ``tilde_X`` stacks ``M * int_{B_m} X(t) dt`` over bins.
    """
    if n_bins < 1:
        raise ArgumentError("n_bins must be >= 1")
    means = model.trajectory.bin_averages(n_bins)  # (M, N, d)
    X = means.reshape(n_bins * model.n_nodes, model.dim)
    Lbar = X @ model.layer_positions.T
    return (UnfoldedIntensity(Lbar, model.n_nodes, n_bins, model.n_layers, "exact"),
            BinnedPositions(X, model.n_nodes, n_bins))


def rebin(unfolded: UnfoldedIntensity, factor: int) -> UnfoldedIntensity:
    """Merge groups of ``factor`` consecutive bins of an empirical estimate."""
    M = unfolded.n_bins
    if factor < 1 or M % factor:
        raise ArgumentError(f"factor {factor} does not divide {M} bins")
    n, L = unfolded.n_nodes, unfolded.n_layers
    counts = unfolded.counts().reshape(M // factor, factor, n, n * L).sum(axis=1)
    M2 = M // factor
    return UnfoldedIntensity(M2 * counts.reshape(M2 * n, n * L).astype(float), n, M2, L, unfolded.kind)


@dataclass(frozen=True)
class TimeMap:
    """Affine map ``t -> (t - offset) / scale`` from raw timestamps onto (0, 1]."""

    offset: float
    scale: float

    def __call__(self, raw):
        t = (np.asarray(raw, dtype=float) - self.offset) / self.scale
        # the earliest timestamp lands on 0, outside the half-open window
        return np.where(t <= 0.0, np.nextafter(0.0, 1.0), np.minimum(t, 1.0))

    def inverse(self, t):
        return np.asarray(t, dtype=float) * self.scale + self.offset


def normalize_times(raw):
    """Map raw timestamps onto (0, 1]; returns ``(times, TimeMap)``.

    ``t_max`` maps to 1 and ``t_min`` to the smallest positive float.  A
    single distinct timestamp maps to 1.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.size == 0:
        return raw.copy(), TimeMap(0.0, 1.0)
    if not np.all(np.isfinite(raw)):
        bad = np.flatnonzero(~np.isfinite(raw))
        raise DataError(f"{len(bad)} non-finite timestamp(s)", bad.tolist())
    lo, hi = float(raw.min()), float(raw.max())
    tmap = TimeMap(lo - 1.0, 1.0) if hi == lo else TimeMap(lo, hi - lo)
    return tmap(raw), tmap
