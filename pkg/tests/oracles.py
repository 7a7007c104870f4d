"""Independent reference implementations used as test oracles.

None of these call into the package; they favour obvious correctness over speed.
"""
import itertools

import numpy as np


def jacobi_svd(A, tol=1e-15, max_sweeps=60):
    """Full thin SVD by one-sided (Hestenes) Jacobi rotations.

    Column pairs are swept in round-robin order, all disjoint pairs of a
    round rotated at once.  Returns ``(U, s, V)`` sorted by decreasing ``s``.
    """
    A = np.array(A, dtype=float)
    transposed = A.shape[0] < A.shape[1]
    if transposed:
        A = A.T
    m, n = A.shape
    W = A.copy()
    V = np.eye(n)
    # round-robin schedule on an even number of slots (a dummy slot pads odd n)
    slots = n + (n % 2)
    players = list(range(slots))
    rounds = []
    for _ in range(slots - 1):
        pairs = [(players[k], players[slots - 1 - k]) for k in range(slots // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        rounds.append((np.array([p for p, _ in pairs], dtype=int), np.array([q for _, q in pairs], dtype=int)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    for _ in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            if len(p) == 0:
                continue
            ap, aq = W[:, p], W[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not np.any(active):
                continue
            rotated = True
            zeta = np.where(active, (beta - alpha) / np.where(active, 2 * gamma, 1.0), 0.0)
            t = np.where(active, np.sign(zeta + (zeta == 0)) / (np.abs(zeta) + np.sqrt(1 + zeta ** 2)), 0.0)
            c = 1 / np.sqrt(1 + t ** 2)
            s = c * t
            W[:, p], W[:, q] = c * ap - s * aq, s * ap + c * aq
            vp, vq = V[:, p], V[:, q]
            V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
        if not rotated:
            break
    sv = np.linalg.norm(W, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv = sv[order]
    W, V = W[:, order], V[:, order]
    U = W / np.where(sv > 0, sv, 1.0)
    if transposed:
        return V, sv, U
    return U, sv, V


def two_to_inf_loop(A):
    best = 0.0
    for row in np.asarray(A, dtype=float):
        best = max(best, float(np.sqrt(sum(v * v for v in row))))
    return best


def covariance_C_loop(X_tilde, Y, i, m, n):
    x = X_tilde[m * n + i]
    d = Y.shape[1]
    C = np.zeros((d, d))
    for y in Y:
        w = float(x @ y)
        for a in range(d):
            for b in range(d):
                C[a, b] += w * y[a] * y[b]
    return C / Y.shape[0]


def covariance_D_loop(X_tilde, Y, i, layer, n):
    y = Y[layer * n + i]
    d = Y.shape[1]
    D = np.zeros((d, d))
    for x in X_tilde:
        w = float(x @ y)
        for a in range(d):
            for b in range(d):
                D[a, b] += w * x[a] * x[b]
    return D / X_tilde.shape[0]


def box_smooth_loop(series, w):
    series = list(series)
    n, half = len(series), w // 2
    out = []
    for k in range(n):
        window = series[max(0, k - half):min(n, k + half + 1)]
        out.append(sum(window) / len(window))
    return np.array(out)


def distance_loop(T):
    n = len(T)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            D[i, j] = np.sqrt(np.sum((np.asarray(T[i]) - np.asarray(T[j])) ** 2))
    return D


def ari_pair_counts(a, b):
    """Adjusted Rand index from the four pair-agreement counts."""
    same_same = same_diff = diff_same = diff_diff = 0
    for i, j in itertools.combinations(range(len(a)), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        if sa and sb:
            same_same += 1
        elif sa:
            same_diff += 1
        elif sb:
            diff_same += 1
        else:
            diff_diff += 1
    num = 2.0 * (same_same * diff_diff - same_diff * diff_same)
    den = ((same_same + same_diff) * (same_diff + diff_diff)
           + (same_same + diff_same) * (diff_same + diff_diff))
    return 1.0 if den == 0 else num / den


def count_events_loop(events, n_nodes, n_bins, n_layers):
    """Histogram estimator by direct recount: bin m holds t in (m/M, (m+1)/M]."""
    A = np.zeros((n_nodes * n_bins, n_nodes * n_layers))
    for s, d, l, t in events:
        m = 0
        while not (m / n_bins < t <= (m + 1) / n_bins):
            m += 1
        A[m * n_nodes + s, l * n_nodes + d] += n_bins
    return A


def random_orthogonal(d, rng):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))
