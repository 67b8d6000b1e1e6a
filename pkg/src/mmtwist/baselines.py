"""Comparison methods: layer-sum spectral clustering, unregularized Tucker
power iteration from an HOSVD start, and spectral clustering of the mode-3
unfolding."""

from dataclasses import replace

from .clustering import kmeans, spectral_cluster
from .tensor import SliceOperator, as_tensor3
from .twist import hosvd_init, power_iterate


def sum_adj(A, n_global, config=None, dim=None):
    """Spectral clustering of the summed adjacency matrix.

    ``dim`` sets how many leading eigenvectors are clustered (default
    ``n_global``).  When the global communities outnumber the rank of the
    expected sum, the surplus eigenvectors carry only noise, so callers that
    know the rank should pass it.
    """
    return spectral_cluster(as_tensor3(A).sum(axis=2), n_global, config, dim)


def hosvd_tucker(A, config):
    """Power iteration without row truncation, started from the HOSVD factors.

    ``config``'s regularization levels are overridden with 1, which leaves any
    orthonormal factor unchanged up to rotation.
    """
    ops = SliceOperator.of(A)
    U0, W0 = hosvd_init(ops, config.r, config.m)
    return power_iterate(ops, replace(config, delta1=1.0, delta2=1.0), U0, W0)


def m3_spectral(A, m, config=None):
    """K-means on the top-``m`` left singular vectors of the mode-3 unfolding."""
    return kmeans(SliceOperator.of(A).top_left(3, m), m, config)
