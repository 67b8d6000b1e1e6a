"""Inner loops with two interchangeable implementations.

Each kernel exists as ``<name>_numpy`` (vectorised numpy) and, when numba is
importable, ``<name>_numba`` (an ``@njit`` compiled loop).  The public name
``<name>`` is bound to the numba version unless the environment variable
``MMTWIST_DISABLE_NUMBA`` is set to a truthy value before import, or numba is
missing.  Both paths consume identical inputs (including pre-drawn uniforms),
so they return identical results up to floating-point summation order.
"""

import os

import numpy as np

_FLAG = os.environ.get("MMTWIST_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

HAVE_NUMBA = njit is not None
BACKEND = "numba" if HAVE_NUMBA and not NUMBA_DISABLED else "numpy"


def _jit(fn):
    if njit is None:
        return None
    return njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# Bernoulli layer sampling


def n_uniforms(n, self_loops):
    """Number of uniforms one layer consumes (upper triangle, row-major)."""
    return n * (n + 1) // 2 if self_loops else n * (n - 1) // 2


def bernoulli_layer_numpy(z, B, uniforms, self_loops):
    n = z.shape[0]
    rows, cols = np.triu_indices(n, k=0 if self_loops else 1)
    hits = (uniforms < B[z[rows], z[cols]]).astype(np.float64)
    out = np.zeros((n, n), order="F")
    out[rows, cols] = hits
    out[cols, rows] = hits
    return out


def _bernoulli_layer_loops(z, B, uniforms, self_loops):
    n = z.shape[0]
    out = np.zeros((n, n)).T  # Fortran-ordered
    pos = 0
    start = 0 if self_loops else 1
    for i in range(n):
        zi = z[i]
        for j in range(i + start, n):
            if uniforms[pos] < B[zi, z[j]]:
                out[i, j] = 1.0
                out[j, i] = 1.0
            pos += 1
    return out


bernoulli_layer_numba = _jit(_bernoulli_layer_loops)


# ---------------------------------------------------------------------------
# Lloyd iterations


def lloyd_numpy(points, centers, max_iters, tol):
    """Run Lloyd's algorithm from ``centers``.

    Returns ``(labels, centers, trace)`` where ``trace[t]`` is the
    within-cluster sum of squares after the t-th assignment step.  Empty
    clusters keep their previous center.
    """
    centers = np.array(centers, dtype=np.float64)
    k = centers.shape[0]
    trace = []
    for _ in range(max_iters):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        trace.append(d2[np.arange(points.shape[0]), labels].sum())
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, points)
        new = centers.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        shift = ((new - centers) ** 2).sum(axis=1).max()
        centers = new
        if shift <= tol * tol:
            break
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    trace.append(d2[np.arange(points.shape[0]), labels].sum())
    return labels.astype(np.int64), centers, np.array(trace)


def _assign(points, centers, labels):
    n, dim = points.shape
    k = centers.shape[0]
    total = 0.0
    for i in range(n):
        best = np.inf
        arg = 0
        for c in range(k):
            acc = 0.0
            for t in range(dim):
                diff = points[i, t] - centers[c, t]
                acc += diff * diff
            if acc < best:
                best = acc
                arg = c
        labels[i] = arg
        total += best
    return total


def _lloyd_loops(points, centers, max_iters, tol):
    n, dim = points.shape
    k = centers.shape[0]
    centers = centers.copy()
    labels = np.zeros(n, dtype=np.int64)
    trace = np.empty(max_iters + 1)
    sums = np.empty((k, dim))
    counts = np.empty(k, dtype=np.int64)
    done = 0
    for it in range(max_iters):
        trace[it] = assign_numba(points, centers, labels)
        done = it + 1
        sums[:, :] = 0.0
        counts[:] = 0
        for i in range(n):
            c = labels[i]
            counts[c] += 1
            for t in range(dim):
                sums[c, t] += points[i, t]
        shift = 0.0
        for c in range(k):
            if counts[c] == 0:
                continue
            moved = 0.0
            for t in range(dim):
                value = sums[c, t] / counts[c]
                diff = value - centers[c, t]
                moved += diff * diff
                centers[c, t] = value
            if moved > shift:
                shift = moved
        if shift <= tol * tol:
            break
    trace[done] = assign_numba(points, centers, labels)
    return labels, centers, trace[: done + 1].copy()


assign_numba = _jit(_assign)
lloyd_numba = _jit(_lloyd_loops)


# ---------------------------------------------------------------------------
# Sequential threshold scan over rows (one pass of the sup-norm layer clustering)


def threshold_scan_numpy(W, eps):
    """Scan rows in order; open a new cluster when the nearest representative
    is farther than ``eps``.  Representatives are the first row of each
    cluster.  Returns ``(labels, n_clusters)``."""
    L = W.shape[0]
    labels = np.zeros(L, dtype=np.int64)
    reps = [0]
    for l in range(1, L):
        dist = np.sqrt(((W[reps] - W[l]) ** 2).sum(axis=1))
        j = int(dist.argmin())
        if dist[j] > eps:
            labels[l] = len(reps)
            reps.append(l)
        else:
            labels[l] = labels[reps[j]]
    return labels, len(reps)


def _threshold_scan_loops(W, eps):
    L, dim = W.shape
    labels = np.zeros(L, dtype=np.int64)
    reps = np.zeros(L, dtype=np.int64)
    k = 1
    for l in range(1, L):
        best = np.inf
        arg = 0
        for c in range(k):
            acc = 0.0
            for t in range(dim):
                diff = W[reps[c], t] - W[l, t]
                acc += diff * diff
            acc = np.sqrt(acc)
            if acc < best:
                best = acc
                arg = c
        if best > eps:
            labels[l] = k
            reps[k] = l
            k += 1
        else:
            labels[l] = labels[reps[arg]]
    return labels, k


threshold_scan_numba = _jit(_threshold_scan_loops)


# ---------------------------------------------------------------------------
# dispatch

if BACKEND == "numba":
    bernoulli_layer = bernoulli_layer_numba
    lloyd = lloyd_numba
    threshold_scan = threshold_scan_numba
else:
    bernoulli_layer = bernoulli_layer_numpy
    lloyd = lloyd_numpy
    threshold_scan = threshold_scan_numpy
