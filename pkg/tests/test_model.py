import math
import warnings

import numpy as np
import pytest

from _builders import balanced_membership, toy_params, random_params
from mmtwist import kernels
from mmtwist.clustering import Partition, misclustering
from mmtwist.errors import ContractError, ParameterError
from mmtwist.model import (
    MmsbmParams,
    cancellation_params,
    cyclic_labels,
    expected_tensor,
    global_membership,
    core_signal_bound,
    membership_rank,
    oracle_decomposition,
    planted_params,
    planted_probabilities,
    sample_labels,
    sample_tensor,
)
from mmtwist.tensor import multi_mode_product


def single_class(z, B):
    return MmsbmParams((np.asarray(z),), (np.asarray(B, dtype=float),), np.array([1.0]))


# -- parameters ------------------------------------------------------------------


def test_zero_out_in_ratio_gives_diagonal_B():
    params = planted_params(300, 2, 3, 6.0, 0.0, seed=1)
    p = 6.0 * 3 / 300
    for B in params.B:
        assert np.array_equal(B, p * np.eye(3))


def test_planted_probabilities_worked_example():
    p, q = planted_probabilities(600, 2, 10.0, 0.4)
    assert p == pytest.approx(1 / 42, rel=1e-14)
    assert q == pytest.approx(1 / 105, rel=1e-14)


def test_planted_average_degree_monte_carlo():
    params = planted_params(600, 1, 2, 10.0, 0.4, seed=8)
    A = sample_tensor(params, np.zeros(20, dtype=np.int64), seed=8)
    mean_degree = A.sum() / (600 * 20)
    assert abs(mean_degree - 10.0) <= 0.03 * 10.0


def test_simulation5_parameters_construct():
    params = planted_params(600, 3, 3, 10.0, 0.6, seed=0)
    assert params.m == 3 and params.K == (3, 3, 3) and params.n == 600


def test_infeasible_degree_reports_maximum():
    with pytest.raises(ParameterError, match="largest feasible average degree is 420"):
        planted_params(600, 1, 2, 1000.0, 0.4, seed=0)


def test_out_in_ratio_range():
    with pytest.raises(ParameterError):
        planted_probabilities(100, 2, 5.0, 1.5)


def test_params_invariants():
    with pytest.raises(ContractError):
        single_class([0, 2], np.eye(2))
    with pytest.raises(ContractError):
        single_class([0, 1], [[0.5, 0.1], [0.2, 0.5]])
    with pytest.raises(ContractError):
        single_class([0, 1], [[1.5, 0.0], [0.0, 0.5]])
    with pytest.raises(ContractError):
        MmsbmParams((np.array([0, 1]),), (np.eye(2),), np.array([0.7]))


def test_planted_params_deterministic():
    a = planted_params(100, 3, 2, 5.0, 0.3, seed=4)
    b = planted_params(100, 3, 2, 5.0, 0.3, seed=4)
    assert all(np.array_equal(x, y) for x, y in zip(a.memberships, b.memberships))


# -- layer labels -------------------------------------------------------------------------


def test_labels_single_class():
    params = planted_params(50, 1, 2, 5.0, 0.3, seed=0)
    assert not sample_labels(params, 40, seed=1).any()


def test_labels_point_mass():
    z = np.zeros(10, dtype=np.int64)
    params = MmsbmParams((z, z, z), (np.eye(1),) * 3, np.array([1.0, 0.0, 0.0]))
    assert not sample_labels(params, 50, seed=2).any()


def test_labels_frequencies():
    params = planted_params(20, 3, 2, 2.0, 0.3, seed=0)
    labels = sample_labels(params, 3000, seed=5)
    freq = np.bincount(labels, minlength=3) / 3000
    assert np.all(np.abs(freq - 1 / 3) <= 0.03)


def test_labels_need_a_layer():
    with pytest.raises(ContractError):
        sample_labels(planted_params(20, 1, 2, 2.0, 0.3, seed=0), 0, seed=0)


def test_cyclic_labels():
    assert cyclic_labels(3, 7).tolist() == [0, 1, 2, 0, 1, 2, 0]


# -- sampling ------------------------------------------------------------------------------


def test_zero_probabilities_give_zero_tensor():
    params = single_class(np.arange(30) % 2, np.zeros((2, 2)))
    assert not sample_tensor(params, np.zeros(3, dtype=np.int64), seed=0).any()


def test_unit_probabilities_fill_off_diagonal():
    params = single_class(np.arange(30) % 2, np.ones((2, 2)))
    A = sample_tensor(params, np.zeros(2, dtype=np.int64), seed=0)
    expect = 1.0 - np.eye(30)
    for l in range(2):
        assert np.array_equal(A[:, :, l], expect)
    loops = sample_tensor(params, np.zeros(2, dtype=np.int64), seed=0, self_loops=True)
    assert np.array_equal(loops[:, :, 0], np.ones((30, 30)))


def test_within_block_density():
    z = np.arange(200) % 2
    A = sample_tensor(single_class(z, 0.5 * np.eye(2)), np.zeros(1, dtype=np.int64), seed=3)
    block = A[np.ix_(z == 0, z == 0, [0])][:, :, 0]
    off = block[~np.eye(block.shape[0], dtype=bool)]
    assert abs(off.mean() - 0.5) <= 0.05
    assert not A[np.ix_(z == 0, z == 1, [0])].any()


def test_samples_are_symmetric_binary_and_loopless():
    params = planted_params(120, 2, 3, 8.0, 0.4, seed=6)
    A = sample_tensor(params, sample_labels(params, 5, seed=6), seed=6)
    assert A.flags.f_contiguous
    assert np.array_equal(A, A.transpose(1, 0, 2))
    assert set(np.unique(A)) <= {0.0, 1.0}
    assert not A[np.arange(120), np.arange(120), :].any()


def test_sampler_determinism_and_layer_independence():
    params = planted_params(150, 2, 2, 6.0, 0.5, seed=9)
    labels = sample_labels(params, 8, seed=9)
    A = sample_tensor(params, labels, seed=9)
    assert np.array_equal(A, sample_tensor(params, labels, seed=9))
    assert np.array_equal(A[:, :, :3], sample_tensor(params, labels[:3], seed=9))
    assert not np.array_equal(A, sample_tensor(params, labels, seed=10))


def test_layer_label_out_of_range():
    params = planted_params(20, 2, 2, 2.0, 0.3, seed=0)
    with pytest.raises(ContractError):
        sample_tensor(params, np.array([0, 2]), seed=0)


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba unavailable")
def test_sampler_backends_identical():
    rng = np.random.default_rng(1)
    z = rng.integers(3, size=80)
    B = 0.3 * np.eye(3) + 0.1
    for loops in (False, True):
        u = rng.random(kernels.n_uniforms(80, loops))
        a = kernels.bernoulli_layer_numpy(z, B, u, loops)
        b = kernels.bernoulli_layer_numba(z, B, u, loops)
        assert np.array_equal(a, b)


# -- oracle decomposition ------------------------------------------------------------------


def test_single_class_expected_slice():
    z = np.arange(40) % 2
    params = single_class(z, np.diag([0.7, 0.2]))
    Z = np.eye(2)[z]
    oracle = oracle_decomposition(params, np.zeros(3, dtype=np.int64))
    for l in range(3):
        assert np.array_equal(oracle.expected_tensor[:, :, l], Z @ np.diag([0.7, 0.2]) @ Z.T)


def test_reconstruction_invariant_two_classes():
    rng = np.random.default_rng(12)
    params = random_params(rng, 90, 2, balanced=False)
    labels = np.array([0, 1, 1, 0, 1])
    o = oracle_decomposition(params, labels)
    rebuilt = multi_mode_product(o.core, (o.Ubar, o.Ubar, o.Wbar))
    assert np.abs(rebuilt - expected_tensor(params, labels)).max() <= 1e-10
    assert np.abs(rebuilt - o.expected_tensor).max() <= 1e-10
    assert np.abs(o.Wbar.T @ o.Wbar - np.eye(2)).max() <= 1e-12
    assert o.delta1 == pytest.approx(np.sqrt((o.Ubar**2).sum(axis=1)).max(), abs=0)
    assert o.delta2 == pytest.approx(1 / math.sqrt(2), rel=1e-15)


def test_incoherence_on_balanced_instance():
    rng = np.random.default_rng(13)
    params = random_params(rng, 120, 3, balanced=True)
    o = oracle_decomposition(params, cyclic_labels(3, 9))
    assert o.delta1 <= o.kappa0 * math.sqrt(o.r / 120) + 1e-8


def test_absent_class_dropped_with_warning():
    rng = np.random.default_rng(14)
    params = random_params(rng, 60, 3)
    with pytest.warns(UserWarning, match="no layers"):
        o = oracle_decomposition(params, np.array([0, 2, 0]))
    assert o.classes == (0, 2)
    assert o.Wbar.shape == (3, 2)


def test_core_signal_bound_when_preconditions_hold():
    rng = np.random.default_rng(15)
    checked = 0
    for trial in range(30):
        m = int(rng.integers(1, 4))
        if trial % 2:
            params = random_params(rng, 90, m)
        else:
            Ks = rng.integers(2, 4, size=m)
            members = tuple(balanced_membership(rng, 90, K) for K in Ks)
            B = tuple(rng.uniform(0.1, 0.5) * np.eye(K) for K in Ks)
            params = MmsbmParams(members, B, np.full(m, 1.0 / m))
        o = oracle_decomposition(params, cyclic_labels(params.m, 6))
        if o.sigma_min_Bbar < o.p_max:
            continue
        checked += 1
        assert o.sigma_min_core >= core_signal_bound(o) - 1e-6
    assert checked > 0


def test_row_separation():
    rng = np.random.default_rng(16)
    for _ in range(10):
        params = random_params(rng, 80, int(rng.integers(1, 4)), balanced=False)
        o = oracle_decomposition(params, cyclic_labels(params.m, 6))
        glob = global_membership(params).labels
        reps = [np.flatnonzero(glob == k)[0] for k in range(glob.max() + 1)]
        bound = 1 / o.Dbar[0]
        for a in range(len(reps)):
            for b in range(a + 1, len(reps)):
                gap = np.linalg.norm(o.Ubar[reps[a]] - o.Ubar[reps[b]])
                assert gap >= bound - 1e-8


# -- global membership ----------------------------------------------------------------------


def test_global_membership_single_class():
    z = np.array([2, 0, 1, 0, 2])
    params = single_class(z, np.eye(3))
    assert misclustering(global_membership(params), Partition.from_labels(z))[0] == 0


def test_global_membership_duplicated_class():
    z = balanced_membership(np.random.default_rng(0), 30, 3)
    params = MmsbmParams((z, z), (np.eye(3), 0.5 * np.eye(3)), np.array([0.5, 0.5]))
    assert global_membership(params).n_clusters == 3
    assert misclustering(global_membership(params), Partition.from_labels(z))[0] == 0


def test_toy_has_four_global_communities():
    params = toy_params()
    assert params.K == (3, 3)
    assert global_membership(params).n_clusters == 4
    assert membership_rank(params) == 4


def test_global_count_bounds():
    rng = np.random.default_rng(17)
    for _ in range(20):
        params = random_params(rng, 50, int(rng.integers(1, 4)), balanced=False)
        kbar = global_membership(params).n_clusters
        assert max(params.K) <= kbar <= math.prod(params.K)


# -- the cancellation construction ------------------------------------------------------------


def test_cancellation_layer_sum_is_flat():
    params = cancellation_params(40, 5.0, seed=0)
    E = expected_tensor(params, cyclic_labels(2, 4)).sum(axis=2)
    off = E[~np.eye(40, dtype=bool)]
    assert np.allclose(off, off[0], rtol=0, atol=1e-15)
    assert global_membership(params).n_clusters == 2


def test_warnings_are_not_raised_on_normal_oracle():
    params = toy_params()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        oracle_decomposition(params, np.array([0, 1, 0]))
