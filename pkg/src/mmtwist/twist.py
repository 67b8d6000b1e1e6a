"""Regularized tensor power iteration and the four-step community pipeline.

Step 1 estimates node and layer factors ``(U, W)`` of the adjacency tensor by
regularized power iteration from a spectral or HOSVD warm start, step 2
clusters rows of ``U`` into global communities, step 3 clusters rows of ``W``
into layer classes, and step 4 runs spectral clustering on the summed adjacency of each layer class
to recover its local communities.
"""

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .clustering import KmeansConfig, Partition, kmeans, spectral_cluster, supnorm_cluster
from .errors import ContractError, DataError, NumericalError
from .tensor import (
    SliceOperator,
    as_tensor3,
    leading_left_singular,
    max_row_norm,
    mode_product,
    orthonormality_error,
    subspace_distance,
    top_left_singular_vectors,
    unfold,
)

AUTO = "auto"
SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class TwistConfig:
    r: int
    m: int
    iter_max: int = 30
    delta1: object = AUTO
    delta2: object = AUTO
    tol: float = 1e-8

    def __post_init__(self):
        if not 1 <= self.m <= self.r:
            raise ContractError(f"need 1 <= m <= r, got m={self.m}, r={self.r}")
        if self.iter_max < 1 or self.tol < 0:
            raise ContractError("iter_max must be >= 1 and tol >= 0")
        for name in ("delta1", "delta2"):
            value = getattr(self, name)
            if value != AUTO and not value > 0:
                raise ContractError(f"{name} must be positive or 'auto'")

    @property
    def resolved(self):
        return self.delta1 != AUTO and self.delta2 != AUTO

    def resolve(self, A):
        """Replace any ``'auto'`` regularization levels by the degree heuristic."""
        if self.resolved:
            return self
        d1, d2 = auto_deltas(A, self.r, self.m)
        return replace(
            self,
            delta1=d1 if self.delta1 == AUTO else self.delta1,
            delta2=d2 if self.delta2 == AUTO else self.delta2,
        )


@dataclass
class EmbeddingPair:
    """Estimated node factor ``U`` (n x r) and layer factor ``W`` (L x m).

    ``trace[t]`` holds the subspace distances between iterates ``t`` and
    ``t+1`` for ``(U, W)``.  ``regularized_row_norms[t]`` and
    ``orthonormality[t]`` record, for each iteration, the largest row norm of
    the regularized ``(U, W)`` and the orthonormality error of the new
    ``(U, W)``.
    """

    U: np.ndarray
    W: np.ndarray
    iterations_run: int
    trace: np.ndarray = field(repr=False)
    regularized_row_norms: np.ndarray = field(repr=False)
    orthonormality: np.ndarray = field(repr=False)
    deltas: tuple = (1.0, 1.0)


def truncate_rows(U, delta):
    """Rescale rows longer than ``delta`` to norm ``delta``; others unchanged."""
    if not delta > 0:
        raise ContractError("delta must be positive")
    U = np.asarray(U, dtype=np.float64)
    norms = np.sqrt((U**2).sum(axis=1))
    scale = np.ones_like(norms)
    big = norms > delta
    scale[big] = delta / norms[big]
    out = U * scale[:, None]
    # rounding can leave a rescaled row an ulp or two longer than delta
    rows = np.flatnonzero(big)
    while rows.size:
        rows = rows[np.sqrt((out[rows] ** 2).sum(axis=1)) > delta]
        out[rows] *= 1.0 - 2.0**-52
    return out


def regularize(U, delta):
    """Shrink rows of ``U`` to norm at most ``delta``, then re-orthonormalize
    through the top left singular vectors."""
    shrunk = truncate_rows(U, delta)
    r = shrunk.shape[1]
    vecs, s = leading_left_singular(shrunk, r)
    if s[r - 1] < SIGMA_FLOOR:
        raise NumericalError(
            f"row truncation at delta={delta:.3g} left a rank-deficient factor; delta is too small"
        )
    return vecs


def auto_deltas(A, r, m):
    """Degree-based regularization levels.

    ``delta1 = 2 sqrt(r) max_i deg_i / ||deg||`` with node degrees summed over
    all layers, and likewise ``delta2`` from per-layer edge totals.
    """
    A = as_tensor3(A)
    deg = A.sum(axis=(1, 2))
    layer_deg = A.sum(axis=(0, 1))
    if not deg.any():
        raise DataError("adjacency tensor has no edges")
    d1 = 2.0 * math.sqrt(r) * deg.max() / np.sqrt((deg**2).sum())
    d2 = 2.0 * math.sqrt(m) * layer_deg.max() / np.sqrt((layer_deg**2).sum())
    return float(d1), float(d2)


def warm_init_U(A, r):
    """Top-``r`` left singular vectors of the layer sum."""
    A = as_tensor3(A)
    return top_left_singular_vectors(A.sum(axis=2), r)


def _mode3_projection(ops, Ut):
    # unfold(A x1 Ut' x2 Ut', 3) == unfold(A, 3) @ kron(Ut, Ut), without the kron
    return unfold(mode_product(ops.mode2(Ut.T), Ut.T, 1), 3)


def warm_init_W(A, U0, m, delta1):
    if m > U0.shape[1]:
        raise ContractError("layer rank cannot exceed node rank")
    Ut = regularize(U0, delta1)
    return top_left_singular_vectors(_mode3_projection(SliceOperator.of(A), Ut), m)


def hosvd_init(A, r, m):
    """Leading left singular vectors of the mode-1 and mode-3 unfoldings."""
    ops = SliceOperator.of(A)
    return ops.top_left(1, r), ops.top_left(3, m)


def power_iterate(A, config, U0, W0):
    """Regularized power iteration from ``(U0, W0)``.

    Each sweep regularizes both current factors and then updates both from
    those regularized factors (no intra-sweep reuse of the new ``U``).  Stops
    after ``config.iter_max`` sweeps, or earlier once both successive subspace
    distances drop below ``config.tol``.
    """
    ops = SliceOperator.of(A)
    if not config.resolved:
        raise ContractError("regularization levels must be resolved before iterating")
    n, _, L = ops.shape
    r, m = config.r, config.m
    if U0.shape != (n, r) or W0.shape != (L, m):
        raise ContractError(
            f"initial factors {U0.shape}, {W0.shape} do not match ({n}, {r}), ({L}, {m})"
        )
    U, W = np.asarray(U0, dtype=np.float64), np.asarray(W0, dtype=np.float64)
    trace, reg_norms, orth = [], [], []
    for _ in range(config.iter_max):
        Ut = regularize(U, config.delta1)
        Wt = regularize(W, config.delta2)
        T = ops.mode2(Ut.T)
        U_new = top_left_singular_vectors(unfold(mode_product(T, Wt.T, 3), 1), r)
        W_new = top_left_singular_vectors(unfold(mode_product(T, Ut.T, 1), 3), m)
        step = (subspace_distance(U_new, U), subspace_distance(W_new, W))
        trace.append(step)
        reg_norms.append((max_row_norm(Ut), max_row_norm(Wt)))
        orth.append((orthonormality_error(U_new), orthonormality_error(W_new)))
        U, W = U_new, W_new
        if max(step) < config.tol:
            break
    return EmbeddingPair(
        U=U,
        W=W,
        iterations_run=len(trace),
        trace=np.array(trace),
        regularized_row_norms=np.array(reg_norms),
        orthonormality=np.array(orth),
        deltas=(float(config.delta1), float(config.delta2)),
    )


def tucker_fit(A, emb):
    """Frobenius norm of the core ``A x1 U' x2 U' x3 W'``; larger is a better fit."""
    T = SliceOperator.of(A).mode2(emb.U.T)
    core = mode_product(mode_product(T, emb.U.T, 1), emb.W.T, 3)
    return float(np.linalg.norm(core))


def incoherent_start(U0, W0, config):
    """True when regularizing the starts keeps every row within sqrt(2) delta.

    On very sparse tensors the mode-1 unfolding's leading vectors can sit on
    a handful of high-degree nodes; truncation then discards most of a
    direction and the re-orthonormalized factor is no longer incoherent.
    """
    bound = math.sqrt(2.0)
    return (
        max_row_norm(regularize(U0, config.delta1)) <= bound * config.delta1
        and max_row_norm(regularize(W0, config.delta2)) <= bound * config.delta2
    )


def fit_embedding(A, config, init="best"):
    """Warm start plus power iteration (pipeline step 1).

    ``init`` selects the node-factor start: ``"spectral"`` (layer sum),
    ``"hosvd"`` (mode-1 unfolding), or ``"best"``, which runs both and keeps
    the result with the larger :func:`tucker_fit`, preferring the spectral
    start on ties.  Under ``"best"`` the HOSVD start is skipped unless
    :func:`incoherent_start` accepts it.  The layer-factor start always
    projects the tensor onto the regularized node start.
    """
    A = as_tensor3(A)
    config = config.resolve(A)
    if init not in ("spectral", "hosvd", "best"):
        raise ContractError(f"unknown init {init!r}")
    ops = SliceOperator(A)
    runs = []
    if init in ("spectral", "best"):
        U0 = warm_init_U(A, config.r)
        runs.append((U0, warm_init_W(ops, U0, config.m, config.delta1)))
    if init in ("hosvd", "best"):
        U0 = ops.top_left(1, config.r)
        W0 = warm_init_W(ops, U0, config.m, config.delta1)
        if init == "hosvd" or incoherent_start(U0, W0, config):
            runs.append((U0, W0))
    best, best_fit = None, -np.inf
    for U0, W0 in runs:
        emb = power_iterate(ops, config, U0, W0)
        fit = tucker_fit(ops, emb) if len(runs) > 1 else 0.0
        if fit > best_fit:
            best, best_fit = emb, fit
    return best


@dataclass
class TwistResult:
    global_partition: Partition
    layer_partition: Partition
    local_partitions: list
    embedding: EmbeddingPair


def default_epsilon(m, L):
    """Half the distance between layer-factor rows of two equally sized classes."""
    return min(0.5 * math.sqrt(2.0 * m / L), 0.99)


def twist_pipeline(
    A,
    config,
    n_global,
    n_local=None,
    layer_method="kmeans",
    init="best",
    epsilon0=None,
    kmeans_config=None,
):
    """Run the full pipeline on adjacency tensor ``A``.

    Parameters
    ----------
    n_global : int
        Number of global node communities.
    n_local : int, sequence of int, or None
        Local community count per recovered layer class (one int for all).
        ``None`` skips local clustering.
    layer_method : {"kmeans", "supnorm"}
    init : {"best", "spectral", "hosvd"}
        Warm start, see :func:`fit_embedding`.
    """
    A = as_tensor3(A)
    config = config.resolve(A)
    km = kmeans_config or KmeansConfig()

    emb = fit_embedding(A, config, init)

    global_part = kmeans(emb.U, n_global, km)
    if layer_method == "kmeans":
        layers = kmeans(emb.W, config.m, km)
    elif layer_method == "supnorm":
        eps = default_epsilon(config.m, A.shape[2]) if epsilon0 is None else epsilon0
        layers = supnorm_cluster(emb.W, config.m, eps)
    else:
        raise ContractError(f"unknown layer method {layer_method!r}")

    locals_ = []
    if n_local is not None:
        counts = [n_local] * config.m if np.ndim(n_local) == 0 else list(n_local)
        if len(counts) < config.m:
            raise ContractError("n_local needs one entry per layer class")
        for j in range(config.m):
            members = np.flatnonzero(layers.labels == j)
            if members.size == 0:
                warnings.warn(f"layer class {j} received no layers; its local partition is empty")
                locals_.append(None)
                continue
            locals_.append(spectral_cluster(A[:, :, members].sum(axis=2), counts[j], km))
    return TwistResult(global_part, layers, locals_, emb)
