import numpy as np
import pytest
from scipy import linalg, stats

from mippdpg.align import GroundTruth, recovery_error
from mippdpg.binning import BinnedPositions, UnfoldedIntensity, exact_binned_mean
from mippdpg.clt import (all_covariances, covariance_C, covariance_D, inverse_sqrt,
                         normality_report, studentize)
from mippdpg.embed import duase
from mippdpg.errors import ArgumentError, RankDeficiencyError
from mippdpg.simulate import sample_histogram

from oracles import covariance_C_loop, covariance_D_loop, random_orthogonal


def test_C_hand_examples():
    assert covariance_C(np.array([[1.0]]), np.ones((3, 1)), 0, 0)[0, 0] == pytest.approx(1.0)
    C = covariance_C(np.array([[1.0, 1.0]]), np.eye(2), 0, 0)
    assert np.allclose(C, 0.5 * np.eye(2))


def test_D_hand_example_and_role_swap():
    assert covariance_D(np.ones((4, 1)), np.array([[1.0]]), 0, 0)[0, 0] == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    A, B = rng.random((6, 2)) + 0.1, rng.random((9, 2)) + 0.1
    n = 3
    for i in range(n):
        for blk in range(2):
            assert np.allclose(covariance_D(A, B, i, blk, n), covariance_C(B, A, i, blk, n),
                               rtol=0, atol=1e-15)


def test_C_singular_raises():
    with pytest.raises(RankDeficiencyError):
        covariance_C(np.array([[1.0, 1.0]]), np.array([[1.0, 0.0], [2.0, 0.0]]), 0, 0)
    with pytest.raises(ArgumentError):
        covariance_C(np.ones((4, 2)), np.eye(2), 5, 0, n_nodes=2)


def test_against_loop_oracles(smooth100):
    _, X = exact_binned_mean(smooth100, 10)
    Y = smooth100.layer_positions
    rng = np.random.default_rng(1)
    allC = all_covariances(X, Y, "X")
    allD = all_covariances(X, Y, "Y")
    for _ in range(5):
        i, m, layer = rng.integers(100), rng.integers(10), rng.integers(3)
        ref = covariance_C_loop(X.data, Y, i, m, 100)
        assert np.allclose(covariance_C(X, Y, i, m), ref, rtol=1e-12, atol=0)
        assert np.allclose(allC[m * 100 + i], ref, rtol=1e-12, atol=0)
        ref = covariance_D_loop(X.data, Y, i, layer, 100)
        assert np.allclose(covariance_D(X, Y, i, layer), ref, rtol=1e-12, atol=0)
        assert np.allclose(allD[layer * 100 + i], ref, rtol=1e-12, atol=0)


def test_inverse_sqrt():
    S = np.array([[4.0, 1.0], [1.0, 3.0]])
    R = inverse_sqrt(S)
    assert np.allclose(R @ S @ R, np.eye(2), atol=1e-12)
    assert np.allclose(R, linalg.inv(linalg.sqrtm(S)), atol=1e-12)
    with pytest.raises(RankDeficiencyError, match="node-7"):
        inverse_sqrt(np.stack([S, np.zeros((2, 2))]), labels=["ok", "node-7"])


def _toy_problem(seed=0):
    # N=2, M=1, L=1, d=1 with a perturbed noiseless matrix
    X = np.array([[1.0], [2.0]])
    Y = np.array([[1.0], [3.0]])
    truth = GroundTruth(BinnedPositions(X, 2, 1), Y)
    noise = np.random.default_rng(seed).normal(scale=0.05, size=(2, 2))
    emb = duase(UnfoldedIntensity(X @ Y.T + noise, 2, 1, 1), 1)
    return truth, emb


def test_isotropic_scalar_case():
    truth, emb = _toy_problem()
    X, Y = truth.X_tilde.data, truth.Y
    rep = recovery_error(emb, truth, mode="appendix-W")
    r = emb.left @ rep.W_X - X
    q = float((X.T @ X)[0, 0] / 2)
    for i in range(2):
        c = float(Y[:, 0] @ (X[i, 0] * Y[:, 0] ** 2)) / 2
        hand = np.sqrt(2) * np.sqrt(q ** 2 / c) * r[i, 0]
        z = studentize(emb, truth, rep, side="X", scaling="nominal").z[i, 0]
        assert z == pytest.approx(hand, rel=1e-10)


def test_zero_residual():
    X = np.array([[1.0], [2.0]])
    Y = np.array([[1.0], [3.0]])
    truth = GroundTruth(BinnedPositions(X, 2, 1), Y)
    emb = duase(UnfoldedIntensity(X @ Y.T, 2, 1, 1), 1)
    for side in ("X", "Y"):
        assert np.allclose(studentize(emb, truth, side=side).z, 0.0, atol=1e-12)


def test_matches_direct_formula(smooth100):
    truth = GroundTruth.from_model(smooth100, 10)
    emb = duase(sample_histogram(smooth100, 10, 0), 2)
    rep = recovery_error(emb, truth, mode="appendix-W")
    X, Y = truth.X_tilde.data, truth.Y
    QYi = np.linalg.inv(Y.T @ Y / 300)
    QXi = np.linalg.inv(X.T @ X / 1000)
    zX = studentize(emb, truth, rep, "X").z
    zY = studentize(emb, truth, rep, "Y").z
    rX = emb.left @ rep.W_X - X
    rY = emb.right @ rep.W_Y - Y
    for (i, m) in [(0, 0), (57, 4), (99, 9)]:
        C = covariance_C_loop(X, Y, i, m, 100)
        S = linalg.inv(linalg.sqrtm(QYi @ C @ QYi)).real
        assert np.allclose(zX[m * 100 + i], np.sqrt(300 / 10) * S @ rX[m * 100 + i], rtol=1e-8)
    for (i, layer) in [(3, 0), (88, 2)]:
        D = covariance_D_loop(X, Y, i, layer, 100)
        S = linalg.inv(linalg.sqrtm(QXi @ D @ QXi)).real
        assert np.allclose(zY[layer * 100 + i], np.sqrt(100) * S @ rY[layer * 100 + i], rtol=1e-8)


def test_rotation_equivariance(smooth100):
    truth = GroundTruth.from_model(smooth100, 5)
    emb = duase(sample_histogram(smooth100, 5, 2), 2)
    Q = random_orthogonal(2, np.random.default_rng(3))
    rot = GroundTruth(BinnedPositions(truth.X_tilde.data @ Q, 100, 5), truth.Y @ Q)
    for side in ("X", "Y"):
        for scaling in ("corrected", "nominal"):
            a = np.linalg.norm(studentize(emb, truth, side=side, scaling=scaling).z, axis=1)
            b = np.linalg.norm(studentize(emb, rot, side=side, scaling=scaling).z, axis=1)
            assert np.allclose(a, b, rtol=1e-8)


def test_studentize_argument_checks(smooth100):
    truth = GroundTruth.from_model(smooth100, 5)
    emb = duase(sample_histogram(smooth100, 5, 0), 2)
    with pytest.raises(ArgumentError):
        studentize(emb, truth, recovery_error(emb, truth, mode="procrustes-global"))
    with pytest.raises(ArgumentError):
        studentize(emb, truth, side="Z")
    with pytest.raises(ArgumentError):
        studentize(emb, truth, scaling="loose")
    z = studentize(emb, truth)
    groups = z.pooled("block")
    assert sorted(groups) == list(range(5)) and all(len(v) == 100 for v in groups.values())
    assert len(z.pooled("node")) == 100 and z.pooled("all")[None].shape == (500, 2)


def test_normality_on_gaussian_draws():
    z = np.random.default_rng(4).standard_normal((10_000, 2))
    rep = normality_report(z)
    assert np.all((rep.coverage >= 0.94) & (rep.coverage <= 0.96))
    assert rep.covariance_deviation < 0.05 and not rep.degenerate
    assert np.allclose(rep.chi2_quantiles["empirical"], rep.chi2_quantiles["theoretical"], rtol=0.08)


def test_normality_degenerate_zero():
    rep = normality_report(np.zeros((200, 2)))
    assert rep.pooled_coverage == 1.0 and rep.covariance_deviation == 1.0 and rep.degenerate


def test_normality_scaled_by_two():
    z = 2 * np.random.default_rng(5).standard_normal((10_000, 2))
    expected = stats.norm.cdf(0.98) - stats.norm.cdf(-0.98)
    assert expected == pytest.approx(0.6729, abs=1e-4)
    assert normality_report(z).pooled_coverage == pytest.approx(expected, abs=0.015)


def test_normality_needs_rows():
    with pytest.raises(ArgumentError):
        normality_report(np.zeros((99, 2)))
