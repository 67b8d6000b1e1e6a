"""Mixture multi-layer stochastic block model: parameters, sampling, and the
exact population quantities used by tests and diagnostics."""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _rng, kernels
from .clustering import Partition
from .errors import ContractError, NumericalError, ParameterError
from .tensor import max_row_norm, multi_mode_product, sigma_min

RANK_RTOL = 1e-10
# Singular values of the global membership matrix falling in this relative
# band make its rank ambiguous.
AMBIGUOUS_BAND = (1e-13, 1e-8)


@dataclass(frozen=True)
class MmsbmParams:
    """``m`` SBM classes over ``n`` shared nodes.

    ``memberships[j]`` holds the community index of every node in class ``j``
    (the row-wise argmax of the one-hot matrix ``Z_j``); ``B[j]`` is the
    ``K_j x K_j`` connection probability matrix; ``pi`` the class weights.
    """

    memberships: tuple
    B: tuple
    pi: np.ndarray

    def __post_init__(self):
        members = tuple(np.asarray(z, dtype=np.int64) for z in self.memberships)
        probs = tuple(np.asarray(b, dtype=np.float64) for b in self.B)
        pi = np.asarray(self.pi, dtype=np.float64)
        object.__setattr__(self, "memberships", members)
        object.__setattr__(self, "B", probs)
        object.__setattr__(self, "pi", pi)
        if not members or len(members) != len(probs) or pi.shape != (len(members),):
            raise ContractError("memberships, B and pi must describe the same classes")
        n = members[0].size
        for j, (z, b) in enumerate(zip(members, probs)):
            if z.shape != (n,):
                raise ContractError(f"class {j}: membership vector has the wrong length")
            if b.ndim != 2 or b.shape[0] != b.shape[1]:
                raise ContractError(f"class {j}: B must be square")
            if z.min() < 0 or z.max() >= b.shape[0]:
                raise ContractError(f"class {j}: community index out of range")
            if not np.allclose(b, b.T, rtol=0.0, atol=0.0) or b.min() < 0 or b.max() > 1:
                raise ContractError(f"class {j}: B must be symmetric with entries in [0, 1]")
        if pi.min() < 0 or abs(pi.sum() - 1.0) > 1e-12:
            raise ContractError("pi must be a probability vector")

    @property
    def n(self):
        return self.memberships[0].size

    @property
    def m(self):
        return len(self.memberships)

    @property
    def K(self):
        return tuple(b.shape[0] for b in self.B)

    def Z(self, j):
        """One-hot membership matrix of class ``j``."""
        return np.eye(self.K[j])[self.memberships[j]]

    def Zbar(self, classes=None):
        classes = range(self.m) if classes is None else classes
        return np.hstack([self.Z(j) for j in classes])

    def probability_matrix(self, j):
        z = self.memberships[j]
        return self.B[j][np.ix_(z, z)]


def planted_probabilities(n, K, avg_degree, out_in_ratio):
    """Within/between probabilities ``(p, q)`` of ``B = pI + q(11' - I)``
    matching the expected average degree ``(n/K) p + n (K-1)/K q``."""
    if not 0.0 <= out_in_ratio <= 1.0:
        raise ParameterError("out-in ratio must lie in [0, 1]")
    scale = n * (1.0 + (K - 1) * out_in_ratio)
    p = avg_degree * K / scale
    if p > 1.0:
        raise ParameterError(
            f"average degree {avg_degree} needs p = {p:.4g} > 1; "
            f"the largest feasible average degree is {scale / K:.6g}"
        )
    return p, out_in_ratio * p


def planted_params(n, m, K, avg_degree, out_in_ratio, seed):
    """``m`` classes with ``K`` uniformly drawn communities each, all sharing
    ``B = pI + q(11' - I)``, and uniform class weights."""
    p, q = planted_probabilities(n, K, avg_degree, out_in_ratio)
    B = q * np.ones((K, K)) + (p - q) * np.eye(K)
    rng = _rng.stream(seed, _rng.MEMBERSHIPS)
    members = tuple(rng.integers(K, size=n) for _ in range(m))
    return MmsbmParams(members, (B,) * m, np.full(m, 1.0 / m))


def cancellation_params(n, avg_degree, seed):
    """Two classes on the same balanced two-community split whose layer sum
    carries no community signal: class 0 connects only within communities,
    class 1 only across them, both with the same probability.

    With equally many layers per class, the summed expected adjacency is a
    constant matrix, while the tensor itself still separates the communities.
    """
    p = 2.0 * avg_degree / n
    if p > 1.0:
        raise ParameterError(f"average degree {avg_degree} is infeasible for n={n}")
    rng = _rng.stream(seed, _rng.MEMBERSHIPS)
    z = rng.permutation(np.arange(n) % 2)
    assortative = p * np.eye(2)
    disassortative = p * (np.ones((2, 2)) - np.eye(2))
    return MmsbmParams((z, z), (assortative, disassortative), np.array([0.5, 0.5]))


def sample_labels(params, L, seed):
    if L < 1:
        raise ContractError("need at least one layer")
    rng = _rng.stream(seed, _rng.LAYER_LABELS)
    return rng.choice(params.m, size=L, p=params.pi).astype(np.int64)


def cyclic_labels(m, L):
    """Deterministic balanced labels ``0, 1, ..., m-1, 0, 1, ...``."""
    return np.arange(L, dtype=np.int64) % m


def sample_tensor(params, labels, seed, self_loops=False):
    """Draw the ``n x n x L`` symmetric binary adjacency tensor.

    Layer ``l`` uses its own random stream, so results do not depend on the
    order in which layers are produced.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= params.m:
        raise ContractError("layer label out of range")
    n = params.n
    A = np.zeros((n, n, labels.size), order="F")
    count = kernels.n_uniforms(n, self_loops)
    for l, j in enumerate(labels):
        uniforms = _rng.stream(seed, _rng.EDGES, l).random(count)
        A[:, :, l] = kernels.bernoulli_layer(
            params.memberships[j], params.B[j], uniforms, bool(self_loops)
        )
    return A


def expected_tensor(params, labels):
    """``E[A | labels]`` built slice by slice as ``Z_j B_j Z_j'``."""
    labels = np.asarray(labels, dtype=np.int64)
    E = np.zeros((params.n, params.n, labels.size), order="F")
    for l, j in enumerate(labels):
        E[:, :, l] = params.probability_matrix(j)
    return E


@dataclass
class OracleDecomposition:
    """Exact Tucker structure of the expected adjacency tensor.

    ``expected_tensor == core x1 Ubar x2 Ubar x3 Wbar`` with ``Zbar = Ubar
    diag(Dbar) Rbar'`` and ``Wbar = W D_L^{-1/2}``.  ``classes`` lists the
    classes present in the labels; all class-indexed fields follow that order.
    """

    expected_tensor: np.ndarray
    Zbar: np.ndarray
    Ubar: np.ndarray
    Dbar: np.ndarray
    Rbar: np.ndarray
    W: np.ndarray
    Wbar: np.ndarray
    prob_tensor: np.ndarray
    core: np.ndarray
    sigma_min_core: float
    delta1: float
    delta2: float
    r: int
    classes: tuple
    layer_counts: np.ndarray

    @property
    def m(self):
        return len(self.classes)

    @property
    def kappa0(self):
        return float(self.Dbar[0] / self.Dbar[-1])

    @property
    def p_max(self):
        return float(self.expected_tensor.max())

    @property
    def Bbar(self):
        """Core with the community scales removed: ``B x1 Rbar' x2 Rbar'``."""
        return multi_mode_product(self.prob_tensor, (self.Rbar.T, self.Rbar.T, None))

    @property
    def sigma_min_Bbar(self):
        return sigma_min(self.Bbar, (self.r, self.r, self.m))


def oracle_decomposition(params, labels):
    labels = np.asarray(labels, dtype=np.int64)
    present = tuple(j for j in range(params.m) if np.any(labels == j))
    if len(present) < params.m:
        missing = sorted(set(range(params.m)) - set(present))
        warnings.warn(f"classes {missing} have no layers and are dropped from the oracle")
    Ks = [params.K[j] for j in present]
    offsets = np.concatenate([[0], np.cumsum(Ks)])
    k_total = int(offsets[-1])

    prob = np.zeros((k_total, k_total, len(present)), order="F")
    for s, j in enumerate(present):
        block = slice(offsets[s], offsets[s + 1])
        prob[block, block, s] = params.B[j]
    remap = {j: s for s, j in enumerate(present)}
    W = np.zeros((labels.size, len(present)))
    W[np.arange(labels.size), [remap[j] for j in labels]] = 1.0
    Zbar = params.Zbar(present)
    expected = multi_mode_product(prob, (Zbar, Zbar, W))

    u, s, vt = np.linalg.svd(Zbar, full_matrices=False)
    rel = s / s[0]
    if np.any((rel > AMBIGUOUS_BAND[0]) & (rel < AMBIGUOUS_BAND[1])):
        raise NumericalError("rank of the global membership matrix is numerically ambiguous")
    r = int(np.sum(rel > RANK_RTOL))
    Ubar, Dbar, Rbar = u[:, :r], s[:r], vt[:r].T

    counts = W.sum(axis=0)
    Wbar = W / np.sqrt(counts)
    DR = Dbar[:, None] * Rbar.T
    core = multi_mode_product(prob, (DR, DR, np.diag(np.sqrt(counts))))
    return OracleDecomposition(
        expected_tensor=expected,
        Zbar=Zbar,
        Ubar=Ubar,
        Dbar=Dbar,
        Rbar=Rbar,
        W=W,
        Wbar=Wbar,
        prob_tensor=prob,
        core=core,
        sigma_min_core=sigma_min(core, (r, r, len(present))),
        delta1=max_row_norm(Ubar),
        delta2=max_row_norm(Wbar),
        r=r,
        classes=present,
        layer_counts=counts.astype(np.int64),
    )


def global_membership(params):
    """Nodes share a global community iff they share a community in every class."""
    return Partition.from_labels(np.column_stack(params.memberships))


def membership_rank(params):
    """Rank of the stacked membership matrix ``(Z_1, ..., Z_m)``."""
    s = np.linalg.svd(params.Zbar(), compute_uv=False)
    return int(np.sum(s / s[0] > RANK_RTOL))


def core_signal_bound(oracle):
    """Lower bound ``m p_max n sqrt(L_min) / (r kappa0^2)`` on the core's
    signal strength, valid when the scale-free core is well conditioned."""
    n = oracle.Zbar.shape[0]
    return oracle.m * oracle.p_max * n * math.sqrt(oracle.layer_counts.min()) / (
        oracle.r * oracle.kappa0**2
    )
