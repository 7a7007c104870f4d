"""Aligning estimated latent positions with the truth and measuring recovery error.

Three alignment modes are offered:

``appendix-W``
    ``W_X = W^T K^{-1}`` and ``W_Y = W^T R^{-1}`` where ``W`` is the orthogonal
    matrix best matching the estimated and true singular subspaces and
    ``K``, ``R`` map the balanced truth factors back to ``(X_tilde, Y)``.
    Needs the exact mean ``bar_Lambda = X_tilde Y^T``.
``procrustes-global``
    One orthogonal ``Q`` aligning the whole stacked ``X_hat`` with the balanced
    truth factor ``bar_X``, then ``W_X = Q K^{-1}``, ``W_Y = Q R^{-1}``.
``procrustes-per-bin``
    As above but with one ``Q_m`` per time bin on the left side.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .binning import BinnedPositions, exact_binned_mean
from .embed import Embedding, factored_svd
from .errors import ArgumentError, RankDeficiencyError
from .model import LatentModel

__all__ = [
    "MODES",
    "DegenerateAlignmentWarning",
    "GroundTruth",
    "AlignmentReport",
    "AssumptionDiagnostics",
    "two_to_infinity_norm",
    "orthogonal_procrustes",
    "alignment_W",
    "klr_transforms",
    "balanced_factors",
    "recovery_error",
    "assumption_diagnostics",
    "incoherence",
    "condition_number",
    "rate_fit",
]

MODES = ("procrustes-global", "procrustes-per-bin", "appendix-W")


class DegenerateAlignmentWarning(UserWarning):
    pass


def two_to_infinity_norm(A) -> float:
    """Largest Euclidean row norm."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.sqrt(np.max(np.einsum("ij,ij->i", A, A))))


def orthogonal_procrustes(A, B, return_info: bool = False):
    """Orthogonal ``Q`` minimising ``||A Q - B||_F``, from the SVD of ``A^T B``.

    When ``A^T B`` is rank deficient ``Q`` is not unique; it is still returned
    and a ``DegenerateAlignmentWarning`` is issued.  With ``return_info`` the
    call returns ``(Q, {"degenerate": bool, "singular_values": ...})``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ArgumentError(f"shape mismatch {A.shape} vs {B.shape}")
    u, s, vt = np.linalg.svd(A.T @ B)
    Q = u @ vt
    tol = max(A.shape) * np.finfo(float).eps * (s[0] if len(s) and s[0] > 0 else 1.0)
    degenerate = bool(len(s) and s[-1] <= tol)
    if degenerate:
        warnings.warn("A^T B is rank deficient; Procrustes rotation is not unique",
                      DegenerateAlignmentWarning, stacklevel=2)
    if return_info:
        return Q, {"degenerate": degenerate, "singular_values": s}
    return Q


def _check_orthonormal(name, U, tol=1e-6):
    G = U.T @ U
    if np.max(np.abs(G - np.eye(G.shape[0]))) > tol:
        raise ArgumentError(f"{name} does not have orthonormal columns")


def alignment_W(U_bar, U_hat, V_bar, V_hat):
    """Orthogonal ``W`` minimising ``||U_bar^T U_hat - W||_F^2 + ||V_bar^T V_hat - W||_F^2``.

    With ``U_bar^T U_hat + V_bar^T V_hat = W1 S W2^T`` the minimiser is ``W1 W2^T``.
    """
    for name, M in (("U_bar", U_bar), ("U_hat", U_hat), ("V_bar", V_bar), ("V_hat", V_hat)):
        _check_orthonormal(name, np.asarray(M, dtype=float))
    H = np.asarray(U_bar).T @ np.asarray(U_hat) + np.asarray(V_bar).T @ np.asarray(V_hat)
    w1, _, w2t = np.linalg.svd(H)
    return w1 @ w2t


def _lstsq_map(A, B, name):
    # solve A K = B for full-column-rank A
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= max(A.shape) * np.finfo(float).eps * s[0]:
        raise RankDeficiencyError(f"{name} is rank deficient (singular values {s})")
    return np.linalg.lstsq(A, B, rcond=None)[0]


def balanced_factors(X_tilde, Y):
    """Balanced factors of ``bar_Lambda = X_tilde Y^T``.

    Returns ``(U_bar, s_bar, V_bar, X_bar, Y_bar)`` with
    ``X_bar = U_bar diag(s_bar)^{1/2}`` and ``Y_bar = V_bar diag(s_bar)^{1/2}``.
    """
    X = X_tilde.data if isinstance(X_tilde, BinnedPositions) else np.asarray(X_tilde, dtype=float)
    U, s, V = factored_svd(X, np.asarray(Y, dtype=float))
    if s[-1] <= 0:
        raise RankDeficiencyError("X_tilde Y^T has rank below d")
    root = np.sqrt(s)
    return U, s, V, U * root, V * root


def klr_transforms(X_tilde, Y, bar_svd=None):
    """Matrices ``(K, R)`` with ``X_bar = X_tilde K`` and ``Y_bar = Y R``.

    ``bar_svd`` may pass a precomputed ``(U_bar, s_bar, V_bar)``.  Since
    ``X_bar Y_bar^T = X_tilde Y^T`` the pair satisfies ``K R^T = I``.
    """
    X = X_tilde.data if isinstance(X_tilde, BinnedPositions) else np.asarray(X_tilde, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if bar_svd is None:
        U, s, V = factored_svd(X, Y)
    else:
        U, s, V = bar_svd
    root = np.sqrt(s)
    K = _lstsq_map(X, U * root, "X_tilde")
    R = _lstsq_map(Y, V * root, "Y")
    return K, R


@dataclass(frozen=True)
class GroundTruth:
    """True binned positions and layer positions, optionally with the generating model.

    ``exact`` marks ``X_tilde`` as the exact bin average, so that
    ``X_tilde Y^T`` is the mean of the histogram estimator.
    """

    X_tilde: BinnedPositions
    Y: np.ndarray
    model: Optional[LatentModel] = None
    exact: bool = True

    @classmethod
    def from_model(cls, model: LatentModel, n_bins: int):
        _, X = exact_binned_mean(model, n_bins)
        return cls(X, np.asarray(model.layer_positions), model, True)

    @property
    def n_bins(self):
        return self.X_tilde.n_bins


@dataclass
class AlignmentReport:
    mode: str
    W_X: np.ndarray
    W_Y: np.ndarray
    K_breve: np.ndarray
    R_breve: np.ndarray
    W: Optional[np.ndarray] = None
    procrustes_Q: Optional[np.ndarray] = None
    W_X_per_bin: Optional[np.ndarray] = None
    errors: dict = field(default_factory=dict)
    grid_points: int = 10
    rate_fit: dict = field(default_factory=dict)

    def aligned_left(self, embedding: Embedding):
        if self.W_X_per_bin is not None:
            return np.concatenate([embedding.left_block(m) @ self.W_X_per_bin[m]
                                   for m in range(embedding.n_bins)]).reshape(-1, embedding.dim)
        return embedding.left @ self.W_X

    def aligned_right(self, embedding: Embedding):
        return embedding.right @ self.W_Y

    def to_dict(self):
        def mat(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "mode": self.mode,
            "errors": {k: (None if v is None else float(v)) for k, v in self.errors.items()},
            "grid_points": self.grid_points,
            "W_X": mat(self.W_X),
            "W_Y": mat(self.W_Y),
            "K_breve": mat(self.K_breve),
            "R_breve": mat(self.R_breve),
            "W": mat(self.W),
            "procrustes_Q": mat(self.procrustes_Q),
            "rate_fit": dict(self.rate_fit),
        }


def bin_grid(n_bins, points=10):
    """Per-bin evaluation times ``(M, points)``: equispaced on ``(a, b]`` with ``a`` nudged inward."""
    if points < 2:
        raise ArgumentError("need at least 2 grid points per bin")
    edges = np.arange(n_bins + 1) / n_bins
    grid = np.linspace(edges[:-1], edges[1:], points, axis=1)
    grid[:, 0] = np.nextafter(edges[:-1], 1.0)
    return grid


def _continuous_sup(blocks, trajectory, grid):
    # max over bins and grid times of ||blocks[m] - X(t)||_{2,inf}
    worst = 0.0
    for m, times in enumerate(grid):
        diff = blocks[m][None] - trajectory(times)
        worst = max(worst, float(np.sqrt(np.max(np.einsum("tnd,tnd->tn", diff, diff)))))
    return worst


def recovery_error(embedding: Embedding, truth: GroundTruth, mode: str = "procrustes-global",
                   grid_points: int = 10) -> AlignmentReport:
    """Align ``embedding`` with ``truth`` and compute two-to-infinity errors.

    ``errors`` holds ``x_error = ||X_hat W_X - X_tilde||_{2,inf}``,
    ``y_error = ||Y_hat W_Y - Y||_{2,inf}``, and, when a model is attached,
    ``continuous_error`` (aligned bin blocks against ``X(t)`` on a per-bin
    grid of ``grid_points`` times) and ``bias`` (``X_tilde`` blocks against
    ``X(t)`` on the same grid).
    """
    if mode not in MODES:
        raise ArgumentError(f"mode must be one of {MODES}, got {mode!r}")
    X_tilde = truth.X_tilde
    Y = np.asarray(truth.Y, dtype=float)
    n, M, L, d = embedding.n_nodes, embedding.n_bins, embedding.n_layers, embedding.dim
    if X_tilde.data.shape != (n * M, d) or Y.shape != (n * L, d):
        raise ArgumentError(
            f"truth shapes {X_tilde.data.shape}, {Y.shape} do not match embedding "
            f"({n * M}, {d}), ({n * L}, {d})")
    if mode == "appendix-W" and not truth.exact:
        raise ArgumentError("appendix-W alignment needs the exact-mean truth (exact=True)")

    U_bar, s_bar, V_bar, X_bar, Y_bar = balanced_factors(X_tilde, Y)
    K, R = klr_transforms(X_tilde, Y, (U_bar, s_bar, V_bar))
    K_inv, R_inv = np.linalg.inv(K), np.linalg.inv(R)
    report = AlignmentReport(mode, None, None, K, R, grid_points=grid_points)

    if mode == "appendix-W":
        W = alignment_W(U_bar, embedding.U, V_bar, embedding.V)
        report.W = W
        report.W_X = W.T @ K_inv
        report.W_Y = W.T @ R_inv
        left = embedding.left @ report.W_X
    elif mode == "procrustes-global":
        Q = orthogonal_procrustes(embedding.left, X_bar)
        report.procrustes_Q = Q
        report.W_X = Q @ K_inv
        report.W_Y = Q @ R_inv
        left = embedding.left @ report.W_X
    else:
        Qy = orthogonal_procrustes(embedding.right, Y_bar)
        report.procrustes_Q = Qy
        report.W_Y = Qy @ R_inv
        per_bin = np.stack([
            orthogonal_procrustes(embedding.left_block(m), X_bar[m * n:(m + 1) * n]) @ K_inv
            for m in range(M)])
        report.W_X_per_bin = per_bin
        report.W_X = per_bin[0]
        left = report.aligned_left(embedding)

    right = embedding.right @ report.W_Y
    errors = {
        "x_error": two_to_infinity_norm(left - X_tilde.data),
        "y_error": two_to_infinity_norm(right - Y),
        "continuous_error": None,
        "bias": None,
    }
    if truth.model is not None:
        grid = bin_grid(M, grid_points)
        traj = truth.model.trajectory
        errors["continuous_error"] = _continuous_sup(left.reshape(M, n, d), traj, grid)
        errors["bias"] = _continuous_sup(X_tilde.data.reshape(M, n, d), traj, grid)
    report.errors = errors
    return report


# ---------------------------------------------------------------------------
# assumption diagnostics

def incoherence(A) -> float:
    """``max(n/d ||U||_{2,inf}^2, m/d ||V||_{2,inf}^2)`` from the skinny SVD of a rank-``d`` ``A``."""
    A = np.asarray(A, dtype=float)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    d = int(np.sum(s > max(A.shape) * np.finfo(float).eps * s[0]))
    n, m = A.shape
    return max(n / d * two_to_infinity_norm(U[:, :d]) ** 2,
               m / d * two_to_infinity_norm(Vt[:d].T) ** 2)


def condition_number(A) -> float:
    s = np.linalg.svd(np.asarray(A, dtype=float), compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


@dataclass
class AssumptionDiagnostics:
    moment_X: np.ndarray
    moment_Y: np.ndarray
    kappa_X: float
    kappa_Y: float
    mu_X: float
    mu_Y: float
    K_N: Optional[float]
    K_N1: Optional[float]
    K_N2: Optional[float]
    grid: np.ndarray
    projector_degenerate: bool = False
    degenerate_times: list = field(default_factory=list)
    model: Optional[LatentModel] = field(default=None, repr=False)

    def projector(self, t):
        """``P(t) = X(t) (X(t)^T X(t))^{-1} X(t)^T``, shape ``(N, N)``."""
        if self.model is None:
            raise ArgumentError("no model attached")
        X = self.model.trajectory(float(t))
        return X @ np.linalg.solve(X.T @ X, X.T)

    def to_dict(self):
        return {
            "moment_X": self.moment_X.tolist(),
            "moment_Y": self.moment_Y.tolist(),
            "kappa_X": self.kappa_X, "kappa_Y": self.kappa_Y,
            "mu_X": self.mu_X, "mu_Y": self.mu_Y,
            "K_N": self.K_N, "K_N1": self.K_N1, "K_N2": self.K_N2,
            "grid_size": int(len(self.grid)),
            "projector_degenerate": self.projector_degenerate,
            "degenerate_times": [float(t) for t in self.degenerate_times],
        }


def _orthonormal_basis(X):
    # returns None if X(t) loses column rank
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    if s[0] == 0 or s[-1] <= 1e-10 * s[0]:
        return None
    return U


def assumption_diagnostics(X_tilde, Y, model: Optional[LatentModel] = None,
                           grid: int = 100) -> AssumptionDiagnostics:
    """Moment matrices, condition numbers, incoherences and Lipschitz estimates.

    Lipschitz estimates use the grid ``t_k = k / grid``, ``k = 1..grid``:
    ``K_N`` over all grid pairs, ``K_N1`` (projector distance) and ``K_N2``
    (in-subspace coordinate motion) over adjacent pairs.  A time at which
    ``X(t)`` loses column rank sets ``projector_degenerate`` and is skipped.
    """
    X = X_tilde.data if isinstance(X_tilde, BinnedPositions) else np.asarray(X_tilde, dtype=float)
    Y = np.asarray(Y, dtype=float)
    nX, nY = X.shape[0], Y.shape[0]
    diag = AssumptionDiagnostics(
        moment_X=X.T @ X / nX, moment_Y=Y.T @ Y / nY,
        kappa_X=condition_number(X), kappa_Y=condition_number(Y),
        mu_X=incoherence(X), mu_Y=incoherence(Y),
        K_N=None, K_N1=None, K_N2=None,
        grid=np.arange(1, grid + 1) / grid, model=model)
    if model is None:
        return diag
    if grid < 2:
        raise ArgumentError("grid must have at least 2 points")
    t = diag.grid
    traj = model.trajectory

    path = traj(t)  # (grid, N, d)

    # K_N over all pairs
    K_N = 0.0
    for k in range(grid - 1):
        diff = path[k + 1:] - path[k]
        rows = np.sqrt(np.einsum("tnd,tnd->tn", diff, diff).max(axis=1))
        K_N = max(K_N, float(np.max(rows / (t[k + 1:] - t[k]))))

    K1, K2 = 0.0, 0.0
    prev_X = path[0]
    prev_B = _orthonormal_basis(prev_X)
    if prev_B is None:
        diag.degenerate_times.append(t[0])
    for k in range(1, grid):
        X_k = path[k]
        B_k = _orthonormal_basis(X_k)
        h = t[k] - t[k - 1]
        if B_k is None:
            diag.degenerate_times.append(t[k])
        elif prev_B is not None:
            # ||(I - P_s) B_t||_2 is the largest principal-angle sine, i.e. ||P(t) - P(s)||_2
            sine = float(np.linalg.norm(B_k - prev_B @ (prev_B.T @ B_k), 2))
            K1 = max(K1, sine / h)
            proj = prev_B @ (prev_B.T @ (prev_X - X_k))
            K2 = max(K2, two_to_infinity_norm(proj) / h)
        prev_X, prev_B = X_k, B_k
    diag.K_N, diag.K_N1, diag.K_N2 = K_N, K1, K2
    diag.projector_degenerate = bool(diag.degenerate_times)
    return diag


def rate_fit(sizes, errors) -> dict:
    """Least-squares fit of ``log(error) = a + b log(size)``; returns slope, intercept, r2."""
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    if len(x) < 2 or np.ptp(x) == 0:
        raise ArgumentError("rate fit needs at least two distinct sizes")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}
