"""Truncated SVD and the doubly unfolded adjacency spectral embedding."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import svds

from .binning import UnfoldedIntensity
from .errors import ArgumentError, NumericalError

__all__ = [
    "LANCZOS_THRESHOLD",
    "FlatSpectrumWarning",
    "Embedding",
    "SpectrumReport",
    "fix_signs",
    "truncated_svd",
    "factored_svd",
    "duase",
    "select_dimension",
]

#: matrices with more entries than this use the Lanczos path
LANCZOS_THRESHOLD = 20_000_000


class FlatSpectrumWarning(UserWarning):
    pass


def fix_signs(U, V):
    """Flip column pairs so the largest-magnitude entry of each ``U`` column is >= 0.

    Ties in magnitude resolve to the lowest row index (``argmax`` order).
    """
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.where(U[idx, np.arange(U.shape[1])] < 0, -1.0, 1.0)
    return U * signs, V * signs


def _dense_svd(A):
    try:
        return scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        pass
    try:
        return scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd", check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(
            f"dense SVD of a {A.shape} matrix failed with both gesdd and gesvd: {exc}") from exc


def _lanczos_svd(A, d):
    # fixed start vector keeps the result reproducible
    v0 = np.random.default_rng(0x5EED).standard_normal(min(A.shape))
    maxiter = max(1000, 20 * min(A.shape))
    try:
        U, s, Vt = svds(A, k=d, tol=0, v0=v0, maxiter=maxiter, solver="arpack")
    except Exception as exc:  # ArpackNoConvergence and friends
        raise NumericalError(
            f"Lanczos SVD of a {A.shape} matrix (k={d}, maxiter={maxiter}) did not converge: {exc}"
        ) from exc
    order = np.argsort(s, kind="stable")[::-1]
    return U[:, order], s[order], Vt[order]


def truncated_svd(A, d: int, method: str = "auto"):
    """Rank-``d`` SVD ``(U, s, V)`` with ``A ~ U diag(s) V^T``.

    ``method`` is ``"dense"`` (LAPACK bidiagonalisation), ``"lanczos"``
    (ARPACK on the normal operator) or ``"auto"``, which switches to Lanczos
    above ``LANCZOS_THRESHOLD`` entries.  Signs follow ``fix_signs``.  Under
    tied singular values only the spanned subspaces are determined.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ArgumentError("truncated_svd expects a matrix")
    k = min(A.shape)
    if not (1 <= d <= k):
        raise ArgumentError(f"rank d={d} outside [1, {k}]")
    if not np.all(np.isfinite(A)):
        raise ArgumentError("matrix has non-finite entries")
    if method == "auto":
        method = "lanczos" if A.size > LANCZOS_THRESHOLD else "dense"
    if method == "lanczos" and d < k:
        U, s, Vt = _lanczos_svd(A, d)
    elif method in ("dense", "lanczos"):
        U, s, Vt = _dense_svd(A)
    else:
        raise ArgumentError(f"unknown SVD method {method!r}")
    U, V = fix_signs(U[:, :d], Vt[:d].T)
    return np.ascontiguousarray(U), s[:d].copy(), np.ascontiguousarray(V)


def factored_svd(L, R):
    """SVD of ``L @ R.T`` for thin ``L (n x d)`` and ``R (m x d)`` without forming it.

    Returns the rank-``d`` factors ``(U, s, V)`` under the same sign rule as
    ``truncated_svd``.
    """
    Ql, Rl = np.linalg.qr(L)
    Qr, Rr = np.linalg.qr(R)
    u, s, vt = np.linalg.svd(Rl @ Rr.T)
    U, V = fix_signs(Ql @ u, Qr @ vt.T)
    return U, s, V


@dataclass(frozen=True)
class Embedding:
    """Left/right DUASE factors ``(U S^{1/2}, V S^{1/2})``."""

    left: np.ndarray
    right: np.ndarray
    singular_values: np.ndarray
    n_nodes: int
    n_bins: int
    n_layers: int

    @property
    def dim(self):
        return len(self.singular_values)

    def left_block(self, m):
        n = self.n_nodes
        return self.left[m * n:(m + 1) * n]

    def right_block(self, layer):
        n = self.n_nodes
        return self.right[layer * n:(layer + 1) * n]

    @property
    def U(self):
        return self.left / np.sqrt(self.singular_values)

    @property
    def V(self):
        return self.right / np.sqrt(self.singular_values)

    def reconstruction(self):
        return self.left @ self.right.T


def duase(unfolded, d: int, method: str = "auto", dims: Optional[tuple] = None) -> Embedding:
    """Doubly unfolded adjacency spectral embedding of an unfolded matrix.

    ``unfolded`` is an ``UnfoldedIntensity`` or a plain array, in which case
    ``dims=(n_nodes, n_bins, n_layers)`` must be given.
    """
    if isinstance(unfolded, UnfoldedIntensity):
        A = unfolded.data
        dims = (unfolded.n_nodes, unfolded.n_bins, unfolded.n_layers)
    else:
        A = np.asarray(unfolded, dtype=float)
        if dims is None:
            raise ArgumentError("dims=(n_nodes, n_bins, n_layers) required for a plain matrix")
    U, s, V = truncated_svd(A, d, method)
    if np.any(s <= 0):
        raise NumericalError(f"matrix has rank below d={d}: singular values {s}")
    root = np.sqrt(s)
    return Embedding(U * root, V * root, s, *dims)


@dataclass
class SpectrumReport:
    leading_singular_values: np.ndarray
    gap_ratios: np.ndarray
    chosen_d: int
    flat: bool = False
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "leading_singular_values": [float(v) for v in self.leading_singular_values],
            "gap_ratios": [float(v) for v in self.gap_ratios],
            "chosen_d": int(self.chosen_d),
            "flat": bool(self.flat),
        }


def select_dimension(A, k_max: int = 30) -> SpectrumReport:
    """Pick ``d`` at the largest multiplicative gap ``s_k / s_{k+1}`` among the top ``k_max``.

    A flat spectrum (no ratio above 1) yields ``k_max`` with a warning.
    """
    if isinstance(A, UnfoldedIntensity):
        A = A.data
    A = np.asarray(A, dtype=float)
    k_max = int(k_max)
    if not (2 <= k_max <= min(A.shape)):
        raise ArgumentError(f"k_max={k_max} outside [2, {min(A.shape)}]")
    if A.size > LANCZOS_THRESHOLD and k_max < min(A.shape):
        s = _lanczos_svd(A, k_max)[1]
    else:
        s = scipy.linalg.svdvals(A, check_finite=False)[:k_max]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(s[1:] > 0, s[:-1] / np.where(s[1:] > 0, s[1:], 1.0),
                          np.where(s[:-1] > 0, np.inf, 1.0))
    if np.all(ratios <= 1.0 + 1e-12):
        warnings.warn(f"flat singular spectrum; falling back to d={k_max}", FlatSpectrumWarning,
                      stacklevel=2)
        return SpectrumReport(s, ratios, k_max, flat=True, notes=["flat spectrum"])
    return SpectrumReport(s, ratios, int(np.argmax(ratios)) + 1)
