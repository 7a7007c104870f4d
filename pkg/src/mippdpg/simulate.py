"""Sampling event streams from a latent model.

Every (source, destination, layer) edge is an independent inhomogeneous
Poisson process, simulated by thinning against a per-edge, per-segment
dominating rate.  Each edge draws from its own random stream derived from
``(seed, i, j, layer)``, so the output does not depend on how edges are
distributed over workers.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ArgumentError, DataError, ThinningBoundError
from .model import LatentModel

__all__ = [
    "EventStream",
    "edge_rng",
    "sample_events",
    "sample_histogram",
    "integrated_intensity",
    "write_events_csv",
    "read_events_csv",
    "write_events_jsonl",
    "read_events_jsonl",
]


@dataclass(frozen=True)
class EventStream:
    """Columnar stream of ``(src, dst, layer, time)`` quadruples sorted by time."""

    src: np.ndarray
    dst: np.ndarray
    layer: np.ndarray
    time: np.ndarray
    n_nodes: int
    n_layers: int
    seed: Optional[int] = None

    def __post_init__(self):
        for name, dtype in (("src", np.int64), ("dst", np.int64), ("layer", np.int64), ("time", float)):
            arr = np.array(getattr(self, name), dtype=dtype).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.src) == len(self.dst) == len(self.layer) == len(self.time)):
            raise DataError("event columns have different lengths")
        self.check()

    def check(self):
        bad_time = ~((self.time > 0.0) & (self.time <= 1.0))
        bad_index = ((self.src < 0) | (self.src >= self.n_nodes) | (self.dst < 0)
                     | (self.dst >= self.n_nodes) | (self.layer < 0) | (self.layer >= self.n_layers))
        bad = np.flatnonzero(bad_time | bad_index)
        if len(bad):
            k = int(bad[0])
            raise DataError(
                f"{len(bad)} invalid event(s); first is record {k}: "
                f"({self.src[k]}, {self.dst[k]}, {self.layer[k]}, {self.time[k]!r})", bad.tolist())
        if np.any(np.diff(self.time) < 0):
            raise DataError("event times are not sorted")

    def __len__(self):
        return len(self.time)

    def __iter__(self):
        return zip(self.src.tolist(), self.dst.tolist(), self.layer.tolist(), self.time.tolist())

    @classmethod
    def from_records(cls, records, n_nodes, n_layers, seed=None):
        """Build a stream from unsorted quadruples, sorting them canonically."""
        arr = list(records)
        if not arr:
            return cls([], [], [], [], n_nodes, n_layers, seed)
        src, dst, layer, time = (np.asarray(c) for c in zip(*arr))
        return cls(*_canonical_sort(np.asarray(src, np.int64), np.asarray(dst, np.int64),
                                    np.asarray(layer, np.int64), np.asarray(time, float)),
                   n_nodes, n_layers, seed)

    def counts(self):
        """Number of events per (src, dst, layer), shape ``(N, N, L)``."""
        n, L = self.n_nodes, self.n_layers
        flat = (self.src * n + self.dst) * L + self.layer
        return np.bincount(flat, minlength=n * n * L).reshape(n, n, L)


def _canonical_sort(src, dst, layer, time):
    order = np.lexsort((layer, dst, src, time))
    return src[order], dst[order], layer[order], time[order]


def edge_rng(seed, i, j, layer):
    """Independent generator for one edge, keyed by ``(seed, i, j, layer)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(i), int(j), int(layer)))
    return np.random.Generator(np.random.PCG64(ss))


def _propose(seed, edges, bounds, segments):
    # edges: list of (i, j, layer, col); bounds: (n_seg, N, NL)
    out_src, out_dst, out_layer, out_col, out_t, out_u = [], [], [], [], [], []
    for i, j, layer, col in edges:
        rng = edge_rng(seed, i, j, layer)
        for k, (a, b) in enumerate(segments):
            rate = bounds[k, i, col]
            if rate <= 0.0:
                continue
            n = rng.poisson(rate * (b - a))
            if n == 0:
                continue
            draws = rng.random(2 * n)
            out_t.append(b - (b - a) * draws[:n])    # uniform on (a, b]
            out_u.append(draws[n:] * rate)
            out_src.append(np.full(n, i))
            out_dst.append(np.full(n, j))
            out_layer.append(np.full(n, layer))
            out_col.append(np.full(n, col))
    return out_src, out_dst, out_layer, out_col, out_t, out_u


def sample_events(model: LatentModel, seed: int, threads: int = 1) -> EventStream:
    """Simulate all edge processes of ``model`` on (0, 1] by thinning.

    The dominating rate of each edge is computed per continuity segment of the
    trajectories (see ``Trajectory.intensity_bound``).  A proposal whose
    intensity exceeds its bound raises ``ThinningBoundError``; nothing is
    clipped.  Output is identical for any ``threads``.
    """
    n, L = model.n_nodes, model.n_layers
    Y = model.layer_positions
    segments = model.trajectory.segments
    bounds = np.stack([model.trajectory.intensity_bound(Y, k) for k in range(len(segments))])
    edges = [(i, j, l, l * n + j) for i in range(n) for l in range(L) for j in range(n)]
    threads = max(1, int(threads))
    if threads == 1:
        parts = [_propose(seed, edges, bounds, segments)]
    else:
        chunk = -(-len(edges) // threads)
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda c: _propose(seed, c, bounds, segments),
                                  [edges[s:s + chunk] for s in range(0, len(edges), chunk)]))
    cols = [np.concatenate(sum((p[k] for p in parts), [])) if any(p[k] for p in parts)
            else np.empty(0) for k in range(6)]
    src, dst, layer, col, t, u = cols
    src, dst, layer, col = (c.astype(np.int64) for c in (src, dst, layer, col))
    if len(t):
        lam = np.einsum("kd,kd->k", model.trajectory.rows(src, t), Y[col])
        seg = np.searchsorted(np.asarray(model.trajectory.breakpoints), t, side="left")
        bound = bounds[seg, src, col]
        over = lam > bound * (1.0 + 1e-12)
        if np.any(over):
            k = int(np.flatnonzero(over)[0])
            raise ThinningBoundError(
                f"intensity {lam[k]:.6g} exceeds thinning bound {bound[k]:.6g} on edge "
                f"({src[k]}, {dst[k]}, {layer[k]}) at t={t[k]!r}")
        keep = u < lam
        src, dst, layer, t = src[keep], dst[keep], layer[keep], t[keep]
    return EventStream(*_canonical_sort(src, dst, layer, t), n, L, seed)


def integrated_intensity(model: LatentModel, i: int, j: int, layer: int, a: float, b: float) -> float:
    """Compensator ``int_a^b lambda_{layer, i, j}(u) du``.

    Exact for block and piecewise-linear trajectories; 64-node Gauss-Legendre
    per continuity piece otherwise.
    """
    if not (0.0 <= a < b <= 1.0):
        raise ArgumentError(f"need 0 <= a < b <= 1, got a={a}, b={b}")
    for name, v, hi in (("source", i, model.n_nodes), ("destination", j, model.n_nodes),
                        ("layer", layer, model.n_layers)):
        if not 0 <= v < hi:
            raise ArgumentError(f"{name} index {v} out of range")
    x = model.trajectory.integral(a, b)[i]
    return float(x @ model.layer_positions[layer * model.n_nodes + j])


def sample_histogram(model: LatentModel, n_bins: int, seed: int, mean=None):
    """Draw the histogram estimator directly from its exact distribution.

    Bin counts of independent Poisson processes are independent Poisson
    variables with mean ``int_{B_m} lambda``, so ``M * Poisson(bar_lambda / M)``
    has the same law as simulating events and binning them.  Each
    ``(bin, layer)`` block uses its own random stream.  ``mean`` may pass a
    precomputed exact-mean matrix to skip the integration.
    """
    from .binning import UnfoldedIntensity, exact_binned_mean

    if mean is None:
        mean, _ = exact_binned_mean(model, n_bins)
    n, L, M = model.n_nodes, model.n_layers, n_bins
    data = np.empty_like(mean.data)
    for m in range(M):
        for l in range(L):
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence(int(seed), spawn_key=(m, l))))
            block = mean.data[m * n:(m + 1) * n, l * n:(l + 1) * n]
            data[m * n:(m + 1) * n, l * n:(l + 1) * n] = M * rng.poisson(block / M)
    return UnfoldedIntensity(data, n, M, L, "empirical")


# ---------------------------------------------------------------------------
# serialisation

_HEADER = ["src", "dst", "layer", "time"]


def _fmt(t):
    return format(float(t), ".17g")


def write_events_csv(events: EventStream, path):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(_HEADER) + "\n")
        fh.writelines(f"{s},{d},{l},{_fmt(t)}\n" for s, d, l, t in events)


def write_events_jsonl(events: EventStream, path):
    with open(path, "w") as fh:
        fh.writelines(
            f'{{"src": {s}, "dst": {d}, "layer": {l}, "time": {_fmt(t)}}}\n' for s, d, l, t in events)


def _from_rows(rows, n_nodes, n_layers, seed):
    if n_nodes is None:
        n_nodes = 1 + max((max(r[0], r[1]) for r in rows), default=-1)
    if n_layers is None:
        n_layers = 1 + max((r[2] for r in rows), default=-1)
    return EventStream.from_records(rows, max(n_nodes, 1), max(n_layers, 1), seed)


def _checked_row(s, d, l, t, n_nodes, n_layers):
    if min(s, d, l) < 0 or not (0.0 < t <= 1.0):
        raise ValueError("out of range")
    if (n_nodes is not None and max(s, d) >= n_nodes) or (n_layers is not None and l >= n_layers):
        raise ValueError("out of range")
    return s, d, l, t


def read_events_csv(path, n_nodes=None, n_layers=None, seed=None) -> EventStream:
    """Read a canonical ``src,dst,layer,time`` file with 0-based integer indices.

    Malformed lines, including out-of-range indices and times outside
    (0, 1], are collected and reported together in a ``DataError``.  For
    files with string names or raw timestamps use ``io.read_event_table``.
    """
    rows, bad = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != _HEADER:
            raise DataError(f"{path}: expected header {','.join(_HEADER)}", [1])
        for lineno, rec in enumerate(reader, start=2):
            try:
                s, d, l, t = rec
                rows.append(_checked_row(int(s), int(d), int(l), float(t), n_nodes, n_layers))
            except ValueError:
                bad.append(lineno)
    if bad:
        raise DataError(f"{path}: {len(bad)} malformed row(s) at lines {bad[:20]}", bad)
    return _from_rows(rows, n_nodes, n_layers, seed)


def read_events_jsonl(path, n_nodes=None, n_layers=None, seed=None) -> EventStream:
    rows, bad = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                rows.append(_checked_row(int(rec["src"]), int(rec["dst"]), int(rec["layer"]),
                                         float(rec["time"]), n_nodes, n_layers))
            except (ValueError, KeyError, TypeError):
                bad.append(lineno)
    if bad:
        raise DataError(f"{path}: {len(bad)} malformed row(s) at lines {bad[:20]}", bad)
    return _from_rows(rows, n_nodes, n_layers, seed)
