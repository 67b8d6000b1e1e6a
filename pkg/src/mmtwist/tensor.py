"""Dense order-3 tensor algebra.

Tensors are plain ``numpy`` arrays of shape ``(n1, n2, n3)``.  Element
``(i1, i2, i3)`` lives at linear position ``i1 + n1*i2 + n1*n2*i3`` when the
array is Fortran-ordered, which is how every tensor built by this package is
allocated; with that layout the mode-1 unfolding is a zero-copy reshape.

Modes are numbered 1, 2, 3.  Unfoldings follow the Kolda--Bader column order
(remaining indices in increasing mode order, earliest varying fastest), so

    unfold(G x1 A x2 B x3 C, 1) == A @ unfold(G, 1) @ kron(C, B).T
    unfold(G x1 A x2 B x3 C, 2) == B @ unfold(G, 2) @ kron(C, A).T
    unfold(G x1 A x2 B x3 C, 3) == C @ unfold(G, 3) @ kron(B, A).T
"""

import numpy as np
from scipy.sparse import csr_matrix

from .errors import ContractError

# Above this columns/rows ratio, leading left singular vectors are taken from
# the eigendecomposition of the Gram matrix instead of a full thin SVD.
WIDE_RATIO = 8
# SliceOperator switches to sparse slices at or below this fill fraction.
SPARSE_DENSITY = 0.1


def as_tensor3(t):
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3:
        raise ContractError(f"expected an order-3 tensor, got shape {t.shape}")
    return t


def _check_mode(mode):
    if mode not in (1, 2, 3):
        raise ContractError(f"mode must be 1, 2 or 3, got {mode!r}")
    return mode - 1


def unfold(t, mode):
    """Mode-``mode`` matricization, shape ``d_mode x (d1*d2*d3 / d_mode)``."""
    t = as_tensor3(t)
    axis = _check_mode(mode)
    return np.moveaxis(t, axis, 0).reshape(t.shape[axis], -1, order="F")


def fold(m, mode, shape):
    """Inverse of :func:`unfold` for a tensor of the given ``shape``."""
    axis = _check_mode(mode)
    shape = tuple(int(s) for s in shape)
    m = np.asarray(m, dtype=np.float64)
    moved = (shape[axis],) + tuple(s for i, s in enumerate(shape) if i != axis)
    if m.shape != (moved[0], int(np.prod(moved[1:]))):
        raise ContractError(f"matrix of shape {m.shape} does not fold into {shape}")
    return np.moveaxis(m.reshape(moved, order="F"), 0, axis)


def mode_product(t, m, mode):
    """``t x_mode m``: contracts mode ``mode`` of ``t`` with the columns of ``m``."""
    t = as_tensor3(t)
    m = np.asarray(m, dtype=np.float64)
    axis = _check_mode(mode)
    if m.ndim != 2 or m.shape[1] != t.shape[axis]:
        raise ContractError(
            f"cannot multiply mode {mode} of size {t.shape[axis]} by a matrix of shape {m.shape}"
        )
    if axis == 1:
        # batch over frontal slices so each stays a contiguous matrix
        return np.matmul(t.transpose(2, 0, 1), m.T).transpose(1, 2, 0)
    shape = list(t.shape)
    shape[axis] = m.shape[0]
    return fold(m @ unfold(t, mode), mode, shape)


def multi_mode_product(t, matrices):
    """Apply ``t x1 M1 x2 M2 x3 M3``; ``None`` entries skip a mode."""
    for mode, m in enumerate(matrices, start=1):
        if m is not None:
            t = mode_product(t, m, mode)
    return t


def kronecker(a, b):
    return np.kron(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def fix_signs(u):
    """Flip columns so each column's largest-magnitude entry is positive.

    Ties resolve to the lowest row index.
    """
    u = np.array(u, dtype=np.float64)
    if u.size == 0:
        return u
    rows = np.abs(u).argmax(axis=0)
    signs = np.sign(u[rows, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def leading_left_singular(m, r):
    """Top-``r`` left singular vectors and all available singular values.

    The returned vectors carry the deterministic sign convention of
    :func:`fix_signs`.  When singular values ``r`` and ``r+1`` coincide any
    basis of the tied subspace may be returned.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ContractError(f"expected a matrix, got shape {m.shape}")
    rows, cols = m.shape
    if not 1 <= r <= min(rows, cols):
        raise ContractError(f"rank {r} out of range for a {rows}x{cols} matrix")
    if cols > WIDE_RATIO * rows:
        return leading_from_gram(m @ m.T, r)
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    return fix_signs(u[:, :r]), s


def leading_from_gram(gram, r):
    """As :func:`leading_left_singular`, given the Gram matrix ``m @ m.T``."""
    gram = np.asarray(gram, dtype=np.float64)
    if not 1 <= r <= gram.shape[0]:
        raise ContractError(f"rank {r} out of range for a Gram matrix of size {gram.shape[0]}")
    vals, vecs = np.linalg.eigh(gram)
    order = np.argsort(-vals, kind="stable")
    s = np.sqrt(np.clip(vals[order], 0.0, None))
    return fix_signs(vecs[:, order[:r]]), s


def top_left_singular_vectors(m, r):
    """Orthonormal ``rows x r`` basis of the top-``r`` left singular subspace."""
    return leading_left_singular(m, r)[0]


def subspace_distance(a, b):
    """``min_O ||a - b O||`` over orthogonal ``O`` (spectral norm).

    The minimiser is the polar factor of ``b.T @ a``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ContractError(f"factor shapes differ: {a.shape} vs {b.shape}")
    p, _, qt = np.linalg.svd(b.T @ a)
    resid = a - b @ (p @ qt)
    return float(min(np.linalg.norm(resid, 2), 2.0))


def orthonormality_error(u):
    u = np.asarray(u, dtype=np.float64)
    return float(np.abs(u.T @ u - np.eye(u.shape[1])).max())


def max_row_norm(u):
    return float(np.sqrt((np.asarray(u) ** 2).sum(axis=1)).max())


def sigma_min(t, ranks):
    """Smallest of ``sigma_{r_j}(unfold(t, j))`` over the three modes."""
    t = as_tensor3(t)
    values = []
    for mode, rank in zip((1, 2, 3), ranks):
        s = np.linalg.svd(unfold(t, mode), compute_uv=False)
        values.append(s[rank - 1] if rank <= s.size else 0.0)
    return float(min(values))


class SliceOperator:
    """Repeated contractions of one fixed tensor, sparse-aware.

    Tensors whose fill fraction is at most ``SPARSE_DENSITY`` (sampled
    networks) keep each frontal slice in CSR form; denser ones (expected
    tensors) go through the dense routines.  Either way the results equal the
    dense definitions up to floating-point summation order.
    """

    def __init__(self, t):
        t = as_tensor3(t)
        self.shape = n1, n2, n3 = t.shape
        flat = t.ravel(order="F")
        idx = np.flatnonzero(flat)
        self.sparse = idx.size <= SPARSE_DENSITY * t.size
        if not self.sparse:
            self._t = t
            return
        # F-order positions run slice by slice, so each slice is a contiguous run
        vals = flat[idx]
        i1, rest = idx % n1, idx // n1
        i2, layer = rest % n2, rest // n2
        bounds = np.searchsorted(layer, np.arange(n3 + 1))
        self._slices = [
            csr_matrix((vals[a:b], (i1[a:b], i2[a:b])), shape=(n1, n2))
            for a, b in zip(bounds[:-1], bounds[1:])
        ]
        # mode-1 unfolding (columns i2 + n2*l) and mode-3 unfolding (columns i1 + n1*i2)
        self._m1 = csr_matrix((vals, (i1, rest)), shape=(n1, n2 * n3))
        self._m3 = csr_matrix((vals, (layer, i1 + n1 * i2)), shape=(n3, n1 * n2))

    @classmethod
    def of(cls, t):
        return t if isinstance(t, cls) else cls(t)

    def mode2(self, m):
        """``t x2 m``."""
        m = np.asarray(m, dtype=np.float64)
        if not self.sparse:
            return mode_product(self._t, m, 2)
        n1, n2, n3 = self.shape
        if m.ndim != 2 or m.shape[1] != n2:
            raise ContractError(f"cannot multiply mode 2 of size {n2} by a matrix of shape {m.shape}")
        out = np.empty((n1, m.shape[0], n3), order="F")
        mt = np.ascontiguousarray(m.T)
        for l, s in enumerate(self._slices):
            out[:, :, l] = s @ mt
        return out

    def top_left(self, mode, r):
        """Top-``r`` left singular vectors of ``unfold(t, mode)`` for mode 1 or 3."""
        if not self.sparse:
            return top_left_singular_vectors(unfold(self._t, mode), r)
        return leading_from_gram(self._gram(mode), r)[0]

    def _gram(self, mode):
        if mode not in (1, 3):
            raise ContractError("sparse Gram matrices are available for modes 1 and 3")
        u = self._m1 if mode == 1 else self._m3
        return (u @ u.T).toarray()
