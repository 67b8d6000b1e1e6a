"""K-means, threshold-based layer clustering, spectral clustering, and
misclustering metrics."""

import itertools
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _rng, kernels
from .errors import ClusteringError, ContractError
from .tensor import fix_signs

# Exact permutation search up to this many clusters, Hungarian assignment above.
EXACT_MATCH_MAX = 8
MAX_EPS_RERUNS = 64


@dataclass(frozen=True)
class Partition:
    """Labelling of ``N`` items into ``n_clusters`` groups, labels ``0..K-1``."""

    labels: np.ndarray
    n_clusters: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        if self.n_clusters < 1:
            raise ContractError("a partition needs at least one cluster")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_clusters):
            raise ContractError(f"labels must lie in [0, {self.n_clusters})")

    @classmethod
    def from_labels(cls, labels):
        """Relabel arbitrary labels (or rows of a 2-d array) to ``0..K-1`` by
        first appearance."""
        labels = np.asarray(labels)
        axis = 0 if labels.ndim == 2 else None
        _, first, inverse = np.unique(
            labels, return_index=True, return_inverse=True, axis=axis
        )
        rank = np.empty(first.size, dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(first.size)
        return cls(rank[inverse.ravel()], max(first.size, 1))

    def __len__(self):
        return self.labels.size

    @property
    def sizes(self):
        return np.bincount(self.labels, minlength=self.n_clusters)

    def canonical(self):
        return Partition.from_labels(self.labels)


@dataclass(frozen=True)
class KmeansConfig:
    restarts: int = 20
    max_iters: int = 100
    tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1:
            raise ContractError("restarts and max_iters must be at least 1")


@dataclass
class KmeansResult:
    partition: Partition
    centers: np.ndarray
    wcss: float
    trace: np.ndarray = field(repr=False)


def _kmeanspp(points, k, rng):
    n = points.shape[0]
    centers = [int(rng.integers(n))]
    d2 = ((points - points[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            break
        pick = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
        pick = min(pick, n - 1)
        centers.append(pick)
        d2 = np.minimum(d2, ((points - points[pick]) ** 2).sum(axis=1))
    return points[centers].copy()


def kmeans_fit(points, k, config=None):
    """Lloyd's algorithm with k-means++ seeding; best of ``config.restarts``.

    If ``k`` exceeds the number of distinct rows, a warning is issued and one
    cluster per distinct row is returned.
    """
    config = config or KmeansConfig()
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ContractError(f"cannot form {k} clusters from {n} points")
    n_distinct = np.unique(points, axis=0).shape[0]
    if k > n_distinct:
        warnings.warn(f"only {n_distinct} distinct points; returning {n_distinct} clusters")
        k = n_distinct

    best = None
    for restart in range(config.restarts):
        rng = _rng.stream(config.seed, _rng.KMEANS, restart)
        init = _kmeanspp(points, k, rng)
        labels, centers, trace = kernels.lloyd(points, init, config.max_iters, config.tol)
        wcss = float(trace[-1])
        if best is None or wcss < best[2]:
            best = (labels, centers, wcss, trace)
    labels, centers, wcss, trace = best
    part = Partition.from_labels(labels)
    # keep centers aligned with the relabelled partition
    order = [int(labels[np.argmax(part.labels == c)]) for c in range(part.n_clusters)]
    return KmeansResult(part, centers[order], wcss, trace)


def kmeans(points, k, config=None):
    return kmeans_fit(points, k, config).partition


def supnorm_cluster(W, m, epsilon0):
    """Cluster the rows of ``W`` into exactly ``m`` groups by threshold scanning.

    Rows are visited in order; a row joins the cluster of its nearest
    representative (first row of each cluster) unless that Euclidean distance
    exceeds the threshold, in which case it founds a new cluster.  The
    threshold doubles when too many clusters appear and halves when too few;
    once both outcomes have been seen it bisects between them.

    Raises
    ------
    ClusteringError
        If no threshold within 64 re-runs yields ``m`` clusters.
    """
    if not 0.0 < epsilon0 < 1.0:
        raise ContractError("epsilon0 must lie in (0, 1)")
    W = np.ascontiguousarray(W, dtype=np.float64)
    if W.ndim == 1:
        W = W[:, None]
    if not 1 <= m <= W.shape[0]:
        raise ContractError(f"cannot form {m} clusters from {W.shape[0]} rows")
    eps = float(epsilon0)
    too_small = too_large = None
    closest = None
    for _ in range(MAX_EPS_RERUNS + 1):
        labels, k = kernels.threshold_scan(W, eps)
        if closest is None or abs(k - m) < abs(closest - m):
            closest = k
        if k == m:
            return Partition(labels, m)
        if k > m:
            too_small = eps
            eps = 2.0 * eps if too_large is None else 0.5 * (too_small + too_large)
        else:
            too_large = eps
            eps = 0.5 * eps if too_small is None else 0.5 * (too_small + too_large)
    raise ClusteringError(
        f"no threshold produced {m} clusters (closest: {closest})", closest_k=closest
    )


def spectral_cluster(S, k, config=None, dim=None):
    """Adjacency spectral clustering: K-means into ``k`` groups on the rows of
    the ``dim`` (default ``k``) eigenvectors of symmetric ``S`` with the
    largest absolute eigenvalues."""
    S = np.asarray(S, dtype=np.float64)
    dim = k if dim is None else dim
    if not 1 <= dim <= S.shape[0]:
        raise ContractError(f"embedding dimension {dim} out of range")
    vals, vecs = np.linalg.eigh(S)
    order = np.argsort(-np.abs(vals), kind="stable")[:dim]
    return kmeans(fix_signs(vecs[:, order]), k, config)


# ---------------------------------------------------------------------------
# evaluation


def _labels(p):
    return p.labels if isinstance(p, Partition) else np.asarray(p, dtype=np.int64)


@lru_cache(maxsize=None)
def _permutations(k):
    return np.array(list(itertools.permutations(range(k))), dtype=np.int64)


def _confusion(est, truth):
    k = int(max(est.max(initial=0), truth.max(initial=0))) + 1
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (est, truth), 1)
    return conf


def best_matching(est, truth):
    """Label map ``est -> truth`` maximising agreement, and the agreement count."""
    est, truth = _labels(est), _labels(truth)
    if est.shape != truth.shape:
        raise ContractError(f"partitions cover {est.size} and {truth.size} items")
    if est.size == 0:
        return np.zeros(0, dtype=np.int64), 0
    conf = _confusion(est, truth)
    k = conf.shape[0]
    if k <= EXACT_MATCH_MAX:
        perms = _permutations(k)
        scores = conf[np.arange(k), perms].sum(axis=1)
        best = int(scores.argmax())
        return perms[best], int(scores[best])
    rows, cols = linear_sum_assignment(conf, maximize=True)
    mapping = np.empty(k, dtype=np.int64)
    mapping[rows] = cols
    return mapping, int(conf[rows, cols].sum())


def misclustering(est, truth):
    """Minimal Hamming disagreement over relabelings: ``(count, rate)``."""
    est_l = _labels(est)
    _, agree = best_matching(est, truth)
    count = est_l.size - agree
    return count, (count / est_l.size if est_l.size else 0.0)
