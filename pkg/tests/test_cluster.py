import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.cluster import hierarchy
from scipy.spatial.distance import squareform

from mippdpg.cluster import (agglomerative_cluster, box_smooth, choose_k, compare_partitions,
                             cut_tree, normalize_and_smooth, pairwise_distances,
                             trajectory_distances)
from mippdpg.embed import duase
from mippdpg.errors import ArgumentError, NumericalError
from mippdpg.model import build_block_model, default_smooth_spec
from mippdpg.simulate import sample_histogram

from oracles import ari_pair_counts, box_smooth_loop, distance_loop, random_orthogonal

FOUR_POINT = np.array([[0.0, 1.0, 5.0, 6.0],
                       [1.0, 0.0, 5.0, 6.0],
                       [5.0, 5.0, 0.0, 2.0],
                       [6.0, 6.0, 2.0, 0.0]])


def test_box_smooth_examples():
    assert np.allclose(box_smooth([0, 0, 1, 0, 0], 3), [0, 1 / 3, 1 / 3, 1 / 3, 0])
    assert np.allclose(box_smooth(np.full(7, 2.5), 5), 2.5)
    x = np.random.default_rng(0).standard_normal(9)
    assert np.array_equal(box_smooth(x, 1), x)
    for w in (3, 5, 9):
        assert np.allclose(box_smooth(x, w), box_smooth_loop(x, w), atol=1e-14)
    with pytest.raises(ArgumentError):
        box_smooth(x, 4)
    with pytest.raises(ArgumentError):
        box_smooth(x, 11)


def test_normalize_then_smooth():
    rng = np.random.default_rng(1)
    n, M, d = 5, 7, 3
    data = rng.standard_normal((n * M, d)) * [1.0, 5.0, 0.1] + [3.0, -1.0, 0.0]
    T = normalize_and_smooth(data, 3, n_nodes=n, n_bins=M)
    normed = (data - T.center) / T.scale
    assert np.allclose(normed.mean(axis=0), 0, atol=1e-8)
    assert np.allclose(normed.std(axis=0), 1, atol=1e-8)
    for i in range(n):
        for k in range(d):
            series = normed.reshape(M, n, d)[:, i, k]
            assert np.allclose(T.data[i, :, k], box_smooth_loop(series, 3), atol=1e-12)


def test_normalize_errors():
    data = np.ones((6, 2))
    data[:, 1] = np.arange(6)
    with pytest.raises(NumericalError, match="dimension 0"):
        normalize_and_smooth(data, 1, n_nodes=2, n_bins=3)
    with pytest.raises(ArgumentError):
        normalize_and_smooth(np.random.default_rng(0).random((6, 2)), 5, n_nodes=2, n_bins=3)
    with pytest.raises(ArgumentError):
        normalize_and_smooth(np.random.default_rng(0).random((6, 2)), 1)


def test_distance_examples():
    M, d = 4, 3
    T = np.stack([np.zeros((M, d)), np.ones((M, d)), np.zeros((M, d))])
    D = trajectory_distances(T)
    assert D[0, 1] == pytest.approx(np.sqrt(M * d)) and D[0, 2] == 0.0
    T = np.random.default_rng(2).standard_normal((9, 5, 2))
    D = trajectory_distances(T)
    assert np.allclose(D, distance_loop(T), rtol=0, atol=1e-14)
    assert np.array_equal(D, D.T) and np.all(np.diag(D) == 0)
    i, j, k = np.meshgrid(range(9), range(9), range(9), indexing="ij")
    assert np.all(D[i, k] <= D[i, j] + D[j, k] + 1e-12)


def test_distance_rotation_invariance():
    rng = np.random.default_rng(3)
    T = rng.standard_normal((10, 6, 3))
    Q = random_orthogonal(3, rng)
    assert np.allclose(trajectory_distances(T @ Q), trajectory_distances(T), atol=1e-10)


def test_pairwise_distance_blocks():
    F = np.random.default_rng(4).standard_normal((37, 4))
    assert np.allclose(pairwise_distances(F, block=5), pairwise_distances(F, block=64), atol=1e-14)


def test_four_point_hand_trace():
    res = agglomerative_cluster(FOUR_POINT, k=2)
    expected = np.array([[0, 1, 1.0, 2], [2, 3, 2.0, 2], [4, 5, 5.5, 4]])
    assert np.array_equal(res.linkage, expected)
    assert res.labels.tolist() == [0, 0, 1, 1]


def test_against_scipy_average_linkage():
    rng = np.random.default_rng(5)
    for n in (5, 12, 30):
        pts = rng.standard_normal((n, 3))
        D = pairwise_distances(pts)
        ours = agglomerative_cluster(D, k=1).linkage
        ref = hierarchy.linkage(squareform(D, checks=False), method="average")
        assert np.allclose(ours[:, 2], ref[:, 2], rtol=1e-12)
        assert np.array_equal(ours[:, 3], ref[:, 3])
        for k in (2, 3, n):
            a = cut_tree(ours, n, k)
            b = hierarchy.fcluster(ref, k, criterion="maxclust")
            assert compare_partitions(a, b) == pytest.approx(1.0)


def test_tie_breaking_lowest_pair():
    D = np.ones((4, 4)) - np.eye(4)
    res = agglomerative_cluster(D, k=1)
    assert res.linkage[0, :2].tolist() == [0, 1]
    # cluster {0, 1} is represented by index 0, so the tie (0, 2) beats (2, 3)
    assert res.linkage[1, :2].tolist() == [2, 4]
    assert res.linkage[2, :2].tolist() == [3, 5]


def test_k_extremes():
    D = pairwise_distances(np.random.default_rng(6).standard_normal((8, 2)))
    assert agglomerative_cluster(D, k=8).labels.tolist() == list(range(8))
    assert np.all(agglomerative_cluster(D, k=1).labels == 0)
    with pytest.raises(ArgumentError):
        agglomerative_cluster(D, k=9)
    with pytest.raises(ArgumentError):
        agglomerative_cluster(D + np.eye(8))


def test_two_clouds():
    rng = np.random.default_rng(7)
    pts = np.concatenate([rng.normal(size=(15, 2)), rng.normal(size=(15, 2)) + 20])
    truth = np.repeat([0, 1], 15)
    res = agglomerative_cluster(pairwise_distances(pts), k=2)
    assert compare_partitions(res.labels, truth) == 1.0
    assert agglomerative_cluster(pairwise_distances(pts)).k == 2


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), scale=st.floats(1e-3, 1e3), k=st.integers(1, 10))
def test_scaling_invariance(seed, scale, k):
    D = pairwise_distances(np.random.default_rng(seed).standard_normal((10, 2)))
    a = agglomerative_cluster(D, k=k).labels
    b = agglomerative_cluster(D * scale, k=k).labels
    assert np.array_equal(a, b)


def test_choose_k_rule():
    # heights jump between the 4th and 5th merge: three clusters
    assert choose_k([1.0, 1.1, 1.2, 1.3, 9.0, 9.5], k_max=5) == 3
    assert choose_k([0.0, 0.0, 3.0], k_max=3) == 2
    assert choose_k([1.0], k_max=5) == 1


def test_ari_examples():
    a = [0, 0, 1, 1, 2]
    assert compare_partitions(a, [5, 5, 3, 3, 9]) == 1.0
    assert compare_partitions(list(range(6)), [0] * 6) == 0.0
    rng = np.random.default_rng(8)
    for _ in range(25):
        x, y = rng.integers(0, 3, 20), rng.integers(0, 4, 20)
        assert compare_partitions(x, y) == pytest.approx(ari_pair_counts(x, y), abs=1e-12)
    with pytest.raises(ArgumentError):
        compare_partitions([0, 1], [0, 1, 2])


def test_smooth_model_recovery():
    model = build_block_model(default_smooth_spec(), 200)
    emb = duase(sample_histogram(model, 10, 0), 2, method="lanczos")
    T = normalize_and_smooth(emb, 5)
    res = agglomerative_cluster(trajectory_distances(T), k=3)
    assert compare_partitions(res.labels, model.groups) >= 0.95
