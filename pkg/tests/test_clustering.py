import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _builders import rand_orth
from mmtwist import kernels
from mmtwist.clustering import (
    KmeansConfig,
    Partition,
    best_matching,
    kmeans,
    kmeans_fit,
    misclustering,
    spectral_cluster,
    supnorm_cluster,
)
from mmtwist.errors import ClusteringError, ContractError


def brute_force_misclustering(est, truth):
    k = max(est.max(), truth.max()) + 1
    best = min(
        int(np.sum(np.array(perm)[est] != truth)) for perm in itertools.permutations(range(k))
    )
    return best


# -- Partition -----------------------------------------------------------------------


def test_partition_from_labels_first_appearance():
    p = Partition.from_labels(["b", "a", "b", "c"])
    assert p.labels.tolist() == [0, 1, 0, 2] and p.n_clusters == 3


def test_partition_from_rows():
    p = Partition.from_labels(np.array([[1, 0], [0, 0], [1, 0], [0, 1]]))
    assert p.labels.tolist() == [0, 1, 0, 2]


def test_partition_validation_and_immutability():
    with pytest.raises(ContractError):
        Partition(np.array([0, 3]), 2)
    p = Partition(np.array([0, 1, 1]), 2)
    with pytest.raises(ValueError):
        p.labels[0] = 1
    assert p.sizes.tolist() == [1, 2]


# -- k-means ----------------------------------------------------------------------------


def test_kmeans_singletons():
    pts = np.random.default_rng(0).normal(size=(6, 2))
    res = kmeans_fit(pts, 6)
    assert res.partition.n_clusters == 6
    assert sorted(res.partition.labels.tolist()) == list(range(6))
    assert res.wcss == 0.0


def test_kmeans_separated_blobs():
    rng = np.random.default_rng(1)
    truth = np.repeat([0, 1], 50)
    pts = rng.normal(size=(100, 2)) + np.array([[0, 0], [10, 0]])[truth]
    assert misclustering(kmeans(pts, 2, KmeansConfig(seed=3)), truth)[0] == 0


def test_kmeans_repeated_rows_exact():
    rng = np.random.default_rng(2)
    centers = rng.normal(size=(5, 3))
    truth = rng.integers(5, size=200)
    truth[:5] = np.arange(5)
    res = kmeans_fit(centers[truth], 5)
    assert misclustering(res.partition, truth)[0] == 0
    assert res.wcss <= 1e-24  # cluster means of equal rows are exact up to rounding


def test_kmeans_too_many_clusters():
    with pytest.raises(ContractError):
        kmeans(np.zeros((3, 2)), 4)


def test_kmeans_fewer_distinct_rows_warns():
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    with pytest.warns(UserWarning):
        p = kmeans(pts, 3)
    assert p.n_clusters == 2


def test_kmeans_wcss_trace_non_increasing():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(300, 3))
    res = kmeans_fit(pts, 6, KmeansConfig(restarts=1, seed=5))
    assert res.trace.size >= 2
    assert np.all(np.diff(res.trace) <= 1e-9 * res.trace[0])
    assert res.wcss == pytest.approx(res.trace[-1], rel=1e-12)


def test_kmeans_deterministic():
    pts = np.random.default_rng(6).normal(size=(80, 2))
    a = kmeans(pts, 4, KmeansConfig(seed=9))
    b = kmeans(pts, 4, KmeansConfig(seed=9))
    assert np.array_equal(a.labels, b.labels)


def test_kmeans_config_validation():
    with pytest.raises(ContractError):
        KmeansConfig(restarts=0)


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba unavailable")
def test_lloyd_backends_agree():
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(150, 4))
    c0 = pts[:5].copy()
    a = kernels.lloyd_numpy(pts, c0.copy(), 50, 1e-8)
    b = kernels.lloyd_numba(pts, c0.copy(), 50, 1e-8)
    assert np.array_equal(a[0], b[0])
    assert np.allclose(a[1], b[1], rtol=0, atol=1e-12)
    assert np.allclose(a[2], b[2], rtol=1e-12, atol=0)


# -- sup-norm layer clustering ---------------------------------------------------------------


def test_supnorm_identical_rows():
    W = np.tile([0.3, 0.4], (5, 1))
    assert supnorm_cluster(W, 1, 0.5).labels.tolist() == [0] * 5


def test_supnorm_all_singletons():
    W = np.eye(4) / np.sqrt(2)  # mutual distance 1
    p = supnorm_cluster(W, 4, 0.5)
    assert p.labels.tolist() == [0, 1, 2, 3]


def three_groups(rng, diam, sep):
    base = np.array([[0, 0], [sep, 0], [sep / 2, sep * np.sqrt(3) / 2]])
    truth = rng.permutation(np.repeat(np.arange(3), 6))
    jitter = rng.uniform(-1, 1, size=(18, 2))
    jitter *= (diam / 2) / np.maximum(np.linalg.norm(jitter, axis=1, keepdims=True), 1)
    return base[truth] + jitter, truth


def test_supnorm_three_groups():
    W, truth = three_groups(np.random.default_rng(8), 0.01, 0.5)
    assert misclustering(supnorm_cluster(W, 3, 0.1), truth)[0] == 0


def test_supnorm_adjusts_threshold():
    W, truth = three_groups(np.random.default_rng(9), 0.01, 0.5)
    # starting far too small and far too large both reach three groups
    assert misclustering(supnorm_cluster(W, 3, 0.001), truth)[0] == 0
    assert misclustering(supnorm_cluster(W, 3, 0.99), truth)[0] == 0


def test_supnorm_failure_reports_closest():
    with pytest.raises(ClusteringError) as info:
        supnorm_cluster(np.zeros((4, 2)), 2, 0.5)
    assert info.value.closest_k == 1


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.2])
def test_supnorm_epsilon_range(eps):
    with pytest.raises(ContractError):
        supnorm_cluster(np.eye(3), 3, eps)


def test_supnorm_rotation_invariant():
    rng = np.random.default_rng(10)
    W = rng.normal(size=(30, 3))
    p = supnorm_cluster(W, 4, 0.5)
    for _ in range(5):
        O = rand_orth(rng, 3, 3)
        assert np.array_equal(supnorm_cluster(W @ O, 4, 0.5).labels, p.labels)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.floats(0.01, 0.1), st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_supnorm_separation_property(m, s, frac, seed):
    """Groups of diameter < s, separated by > 3s, are recovered for any eps in (s, 3s)."""
    rng = np.random.default_rng(seed)
    dim = m + 1
    centers = 4 * s * np.eye(dim)[:m] / np.sqrt(2)  # pairwise 4s apart
    truth = rng.permutation(np.arange(3 * m) % m)
    jitter = rng.normal(size=(truth.size, dim))
    jitter *= 0.45 * s / np.linalg.norm(jitter, axis=1, keepdims=True)
    W = centers[truth] + jitter
    eps = s + frac * 2 * s
    eps = min(max(eps, s * 1.0001), 3 * s * 0.9999)
    assert misclustering(supnorm_cluster(W, m, eps), truth)[0] == 0


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba unavailable")
def test_threshold_scan_backends_agree():
    W = np.random.default_rng(11).normal(size=(40, 3))
    for eps in (0.1, 0.8, 2.0):
        a = kernels.threshold_scan_numpy(W, eps)
        b = kernels.threshold_scan_numba(W, eps)
        assert np.array_equal(a[0], b[0]) and a[1] == b[1]


# -- misclustering ------------------------------------------------------------------------------


def test_misclustering_identity():
    t = np.array([0, 1, 1, 2, 0])
    assert misclustering(t, t) == (0, 0.0)


def test_misclustering_relabeled():
    t = np.array([0, 1, 1, 2, 0, 2])
    assert misclustering(np.array([2, 0, 0, 1, 2, 1]), t)[0] == 0


def test_misclustering_one_flip():
    truth = np.repeat([0, 1], 5)
    est = truth.copy()
    est[3] = 1
    assert misclustering(est, truth) == (1, 0.1)


def test_misclustering_size_mismatch():
    with pytest.raises(ContractError):
        misclustering(np.zeros(3, dtype=int), np.zeros(4, dtype=int))


def test_misclustering_unequal_cluster_counts():
    assert misclustering(np.zeros(4, dtype=int), np.array([0, 0, 1, 1]))[0] == 2


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_misclustering_symmetric_and_exact(k, n, seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(k, size=n)
    b = rng.integers(k, size=n)
    count = misclustering(a, b)[0]
    assert count == misclustering(b, a)[0]
    assert count == brute_force_misclustering(a, b)
    same = Partition.from_labels(a).labels.tolist() == Partition.from_labels(b).labels.tolist()
    assert (count == 0) == same


def test_hungarian_path_matches_brute_force():
    rng = np.random.default_rng(12)
    truth = rng.integers(9, size=60)
    est = truth.copy()
    est[rng.choice(60, 15, replace=False)] = rng.integers(9, size=15)
    mapping, agree = best_matching(est, truth)
    assert sorted(mapping.tolist()) == list(range(9))
    assert 60 - agree == brute_force_misclustering(est, truth)


# -- spectral clustering --------------------------------------------------------------------------


def test_spectral_cluster_block_matrix():
    z = np.repeat([0, 1, 2], 10)
    Z = np.eye(3)[z]
    S = Z @ np.array([[0.8, 0.1, 0.1], [0.1, 0.7, 0.2], [0.1, 0.2, 0.9]]) @ Z.T
    assert misclustering(spectral_cluster(S, 3), z)[0] == 0


def test_spectral_cluster_dimension_range():
    with pytest.raises(ContractError):
        spectral_cluster(np.eye(4), 2, dim=5)
