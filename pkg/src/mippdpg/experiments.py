"""Monte Carlo sweeps over network size, bin count and seed.

A cell is one ``(N, M, seed)`` triple: draw the histogram estimator, embed,
align with the truth and record the error summaries.  Cells are independent
and seeded individually, so sweeps give the same rows for any number of
worker threads.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .align import GroundTruth, rate_fit, recovery_error
from .binning import bin_events, exact_binned_mean
from .embed import duase
from .errors import MippError
from .model import LatentModel
from .simulate import sample_events, sample_histogram

__all__ = ["CellResult", "TruthCache", "run_cell", "run_sweep", "median_table", "fit_rates",
           "ERROR_KEYS"]

log = logging.getLogger(__name__)

ERROR_KEYS = ("x_error", "y_error", "continuous_error", "bias")


@dataclass
class CellResult:
    n_nodes: int
    n_bins: int
    seed: int
    errors: dict
    status: str = "ok"
    message: str = ""
    exit_code: int = 0

    def row(self):
        out = {"n_nodes": self.n_nodes, "n_bins": self.n_bins, "seed": self.seed}
        for k in ERROR_KEYS:
            out[k] = self.errors.get(k)
        out["status"] = self.status
        return out


class TruthCache:
    """Models, exact means and ground truths keyed by ``(N, M)``."""

    def __init__(self, model_factory: Callable[[int], LatentModel]):
        self._factory = lru_cache(maxsize=None)(model_factory)
        self._truth = {}

    def model(self, n_nodes):
        return self._factory(int(n_nodes))

    def get(self, n_nodes, n_bins):
        key = (int(n_nodes), int(n_bins))
        if key not in self._truth:
            model = self.model(n_nodes)
            mean, X = exact_binned_mean(model, n_bins)
            self._truth[key] = (mean, GroundTruth(X, np.asarray(model.layer_positions), model, True))
        return self._truth[key]

    def warm(self, pairs):
        for n, m in pairs:
            self.get(n, m)


def run_cell(cache: TruthCache, n_nodes: int, n_bins: int, seed: int, d: int = 2,
             mode: str = "procrustes-global", sampler: str = "histogram",
             svd_method: str = "lanczos", grid_points: int = 10) -> CellResult:
    """One simulate, bin, embed, align pass; numerical failures become a failed cell."""
    try:
        mean, truth = cache.get(n_nodes, n_bins)
        if sampler == "histogram":
            A = sample_histogram(truth.model, n_bins, seed, mean=mean)
        elif sampler == "events":
            A = bin_events(sample_events(truth.model, seed), n_bins)
        else:
            raise ValueError(f"unknown sampler {sampler!r}")
        emb = duase(A, d, method=svd_method)
        report = recovery_error(emb, truth, mode=mode, grid_points=grid_points)
        return CellResult(n_nodes, n_bins, seed, report.errors)
    except MippError as exc:
        log.warning("cell (N=%d, M=%d, seed=%d) failed: %s", n_nodes, n_bins, seed, exc)
        return CellResult(n_nodes, n_bins, seed, {}, "failed", str(exc), exc.exit_code)


def run_sweep(cache: TruthCache, cells, threads: int = 1, **kwargs):
    """Run ``cells`` (iterable of ``(N, M, seed)``) and return results in input order."""
    cells = [tuple(int(v) for v in c) for c in cells]
    cache.warm(sorted({(n, m) for n, m, _ in cells}))
    if threads <= 1:
        return [run_cell(cache, *c, **kwargs) for c in cells]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(lambda c: run_cell(cache, *c, **kwargs), cells))


def median_table(results, key: str = "x_error"):
    """Median of ``key`` over seeds for every ``(N, M)``: ``{(N, M): median}``."""
    groups = {}
    for r in results:
        if r.status == "ok" and r.errors.get(key) is not None:
            groups.setdefault((r.n_nodes, r.n_bins), []).append(r.errors[key])
    return {k: float(np.median(v)) for k, v in sorted(groups.items())}


def fit_rates(results, keys=("x_error", "y_error")):
    """Log-log slope of the median error against ``N`` for each fixed ``M`` with >= 2 sizes."""
    out = []
    for key in keys:
        table = median_table(results, key)
        for M in sorted({m for _, m in table}):
            sizes = sorted(n for n, m in table if m == M)
            if len(sizes) < 2:
                continue
            fit = rate_fit(sizes, [table[(n, M)] for n in sizes])
            out.append({"error": key, "n_bins": M, "n_sizes": len(sizes), **fit})
    return out
