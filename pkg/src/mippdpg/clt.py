"""Studentised residuals of the embedding and normality diagnostics.

For the left factor the aligned residual row ``r = (X_hat W_X - X_tilde)_{(m, i)}``
is approximately ``(Lambda_hat - bar_Lambda)_{row} Y (Y^T Y)^{-1}``.  Entries of
the histogram estimator have variance ``M * bar_lambda``, so

    Cov(r) ~ (M / NL) Q_Y^{-1} C_{i,m} Q_Y^{-1},
    C_{i,m} = (1/NL) sum_j (X_tilde_{(m,i)} . Y_j) Y_j Y_j^T,  Q_Y = Y^T Y / NL,

and ``z = sqrt(NL / M) (Q_Y^{-1} C Q_Y^{-1})^{-1/2} r``.  Symmetrically, for the
right factor ``Cov(r) ~ (1/N) Q_X^{-1} D_{i,l} Q_X^{-1}`` with ``Q_X = X_tilde^T X_tilde / NM``.

``scaling="nominal"`` instead applies ``sqrt(NL) (Q_X^{-1} C Q_X^{-1})^{-1/2}`` on
the left and ``sqrt(NM) (Q_Y^{-1} D Q_Y^{-1})^{-1/2}`` on the right.  It uses
the other side's moment matrix and drops the bin factor, so it is only
calibrated when those happen to cancel; it is kept for comparison.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .align import AlignmentReport, GroundTruth, recovery_error
from .binning import BinnedPositions
from .embed import Embedding
from .errors import ArgumentError, RankDeficiencyError

__all__ = [
    "EIGEN_FLOOR",
    "StudentizedResiduals",
    "NormalityReport",
    "covariance_C",
    "covariance_D",
    "all_covariances",
    "inverse_sqrt",
    "studentize",
    "normality_report",
]

EIGEN_FLOOR = 1e-12
SCALINGS = ("corrected", "nominal")


def _X(X_tilde):
    return X_tilde.data if isinstance(X_tilde, BinnedPositions) else np.asarray(X_tilde, dtype=float)


def _weighted_gram(rows, weights, norm):
    return (rows.T * weights) @ rows / norm


def _check_pd(mat, what):
    w = np.linalg.eigvalsh(mat)
    if not w[0] > 0:
        raise RankDeficiencyError(f"{what} is not positive definite (smallest eigenvalue {w[0]:.3g})")
    return mat


def covariance_C(X_tilde, Y, i: int, m: int, n_nodes: Optional[int] = None):
    """``(1/NL) sum_j (x . Y_j) Y_j Y_j^T`` with ``x`` row ``i`` of bin ``m`` of ``X_tilde``."""
    X = _X(X_tilde)
    Y = np.asarray(Y, dtype=float)
    n = X_tilde.n_nodes if isinstance(X_tilde, BinnedPositions) else (n_nodes or X.shape[0])
    row = m * n + i
    if not (0 <= i < n and 0 <= row < X.shape[0]):
        raise ArgumentError(f"(i, m) = ({i}, {m}) out of range")
    return _check_pd(_weighted_gram(Y, Y @ X[row], Y.shape[0]), f"C for (i, m) = ({i}, {m})")


def covariance_D(X_tilde, Y, i: int, layer: int, n_nodes: Optional[int] = None):
    """``(1/NM) sum_r (X_tilde_r . y) X_tilde_r X_tilde_r^T`` with ``y`` row ``i`` of layer ``layer``."""
    X = _X(X_tilde)
    Y = np.asarray(Y, dtype=float)
    n = X_tilde.n_nodes if isinstance(X_tilde, BinnedPositions) else (n_nodes or Y.shape[0])
    row = layer * n + i
    if not (0 <= i < n and 0 <= row < Y.shape[0]):
        raise ArgumentError(f"(i, layer) = ({i}, {layer}) out of range")
    return _check_pd(_weighted_gram(X, X @ Y[row], X.shape[0]), f"D for (i, layer) = ({i}, {layer})")


def all_covariances(X_tilde, Y, side: str = "X"):
    """Every ``C_{i,m}`` (side ``"X"``, shape ``(NM, d, d)``) or ``D_{i,l}`` (``"Y"``, ``(NL, d, d)``).

    Row order follows the unfolded layout; positive definiteness is not checked.
    """
    X = _X(X_tilde)
    Y = np.asarray(Y, dtype=float)
    d = X.shape[1]
    if side == "X":
        weights, basis, norm = X @ Y.T, Y, Y.shape[0]
    elif side == "Y":
        weights, basis, norm = Y @ X.T, X, X.shape[0]
    else:
        raise ArgumentError("side must be 'X' or 'Y'")
    outer = (basis[:, :, None] * basis[:, None, :]).reshape(basis.shape[0], d * d)
    return (weights @ outer / norm).reshape(-1, d, d)


def inverse_sqrt(S, labels=None):
    """Batched ``S^{-1/2}`` of symmetric matrices via eigendecomposition.

    Eigenvalues at or below ``EIGEN_FLOOR`` raise ``RankDeficiencyError``
    naming the offending entry (``labels[k]`` if given).
    """
    S = np.asarray(S, dtype=float)
    single = S.ndim == 2
    S = S[None] if single else S
    w, V = np.linalg.eigh(0.5 * (S + np.swapaxes(S, 1, 2)))
    bad = np.flatnonzero(w[:, 0] <= EIGEN_FLOOR)
    if len(bad):
        k = int(bad[0])
        who = labels[k] if labels is not None else k
        raise RankDeficiencyError(
            f"scaling matrix for {who} is not positive definite (eigenvalue {w[k, 0]:.3g})")
    out = (V / np.sqrt(w)[:, None, :]) @ np.swapaxes(V, 1, 2)
    return out[0] if single else out


@dataclass
class StudentizedResiduals:
    """Studentised rows ``z`` with their ``(node, block)`` indices.

    ``block`` is the time bin for side ``"X"`` and the layer for side ``"Y"``.
    """

    z: np.ndarray
    side: str
    node: np.ndarray
    block: np.ndarray
    scaling: np.ndarray
    method: str = "corrected"

    @property
    def dim(self):
        return self.z.shape[1]

    def pooled(self, by: str = "block"):
        """Group rows by ``"block"`` (default), ``"node"``, or ``"all"``."""
        if by == "all":
            return {None: self.z}
        key = {"block": self.block, "node": self.node}.get(by)
        if key is None:
            raise ArgumentError("by must be 'block', 'node' or 'all'")
        return {int(k): self.z[key == k] for k in np.unique(key)}


def studentize(embedding: Embedding, truth: GroundTruth, alignment: Optional[AlignmentReport] = None,
               side: str = "X", scaling: str = "corrected") -> StudentizedResiduals:
    """Studentise the aligned residual rows of one factor.

    ``alignment`` must come from ``recovery_error(..., mode="appendix-W")``;
    it is computed when omitted.
    """
    if scaling not in SCALINGS:
        raise ArgumentError(f"scaling must be one of {SCALINGS}")
    if side not in ("X", "Y"):
        raise ArgumentError("side must be 'X' or 'Y'")
    if alignment is None:
        alignment = recovery_error(embedding, truth, mode="appendix-W")
    elif alignment.mode != "appendix-W":
        raise ArgumentError("studentisation needs the appendix-W alignment")
    n, M, L = embedding.n_nodes, embedding.n_bins, embedding.n_layers
    X = truth.X_tilde.data
    Y = np.asarray(truth.Y, dtype=float)
    Q_X = X.T @ X / X.shape[0]
    Q_Y = Y.T @ Y / Y.shape[0]
    cov = all_covariances(X, Y, side)
    if side == "X":
        resid = embedding.left @ alignment.W_X - X
        Q, factor = (Q_Y, np.sqrt(n * L / M)) if scaling == "corrected" else (Q_X, np.sqrt(n * L))
        n_blocks = M
    else:
        resid = embedding.right @ alignment.W_Y - Y
        Q, factor = (Q_X, np.sqrt(n)) if scaling == "corrected" else (Q_Y, np.sqrt(n * M))
        n_blocks = L
    Qi = np.linalg.inv(Q)
    node = np.tile(np.arange(n), n_blocks)
    block = np.repeat(np.arange(n_blocks), n)
    labels = [(int(a), int(b)) for a, b in zip(node, block)]
    scale = inverse_sqrt(Qi @ cov @ Qi, labels)
    z = factor * np.einsum("kab,kb->ka", scale, resid)
    return StudentizedResiduals(z, side, node, block, scale, scaling)


@dataclass
class NormalityReport:
    n: int
    dim: int
    coverage: np.ndarray
    pooled_coverage: float
    covariance: np.ndarray
    covariance_deviation: float
    chi2_quantiles: dict
    degenerate: bool

    def to_dict(self):
        return {
            "n": self.n,
            "dim": self.dim,
            "coverage": self.coverage.tolist(),
            "pooled_coverage": self.pooled_coverage,
            "covariance": self.covariance.tolist(),
            "covariance_deviation": self.covariance_deviation,
            "chi2_quantiles": self.chi2_quantiles,
            "degenerate": self.degenerate,
        }


QQ_PROBS = (0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99)


def normality_report(z, level: float = 0.95) -> NormalityReport:
    """Coverage of the nominal interval, covariance against identity, chi-square quantiles.

    ``z`` is a ``StudentizedResiduals`` or an ``(n, d)`` array with ``n >= 100``.
    A zero-variance coordinate marks the report as degenerate.
    """
    Z = z.z if isinstance(z, StudentizedResiduals) else np.asarray(z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] < 100:
        raise ArgumentError("normality report needs at least 100 residual vectors")
    n, d = Z.shape
    crit = stats.norm.ppf(0.5 + level / 2)
    inside = np.abs(Z) <= crit
    cov = np.atleast_2d(np.cov(Z, rowvar=False))
    degenerate = bool(np.any(np.var(Z, axis=0) == 0))
    sq = np.einsum("ij,ij->i", Z, Z)
    probs = np.asarray(QQ_PROBS)
    qq = {
        "probabilities": probs.tolist(),
        "empirical": np.quantile(sq, probs).tolist(),
        "theoretical": stats.chi2.ppf(probs, d).tolist(),
    }
    return NormalityReport(
        n=n, dim=d,
        coverage=inside.mean(axis=0),
        pooled_coverage=float(inside.mean()),
        covariance=cov,
        covariance_deviation=float(np.max(np.abs(cov - np.eye(d)))),
        chi2_quantiles=qq,
        degenerate=degenerate,
    )
