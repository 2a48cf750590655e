"""Linear subspaces of R^n held as orthonormal bases.

A :class:`Subspace` wraps an ``(n, D)`` array ``basis`` whose columns are
orthonormal. Two geometric constants drive the penalties downstream:

* ``lambda2``: ``max_i |P e_i|_2``, the largest row norm of the basis, which
  is also ``sup_{t in S} |t|_inf / |t|_2``;
* ``lambda_inf``: ``max_i |P e_i|_1``, the sup-norm operator norm of the
  projector ``P``.
"""

from functools import cached_property

import numpy as np

from . import kernels
from .errors import AllZeroInput, DimensionMismatch, NotOrthonormal

TOL_ORTHO = 1e-10
RANK_TOL = 1e-9
# Rows of the projector materialized at once by lambda_inf.
_ROW_BLOCK_ENTRIES = 1 << 22


def _as_columns(vectors):
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        A = vectors
    else:
        A = np.column_stack([np.asarray(v, dtype=np.float64) for v in vectors])
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] < 1:
        raise ValueError("need at least one vector")
    return A


def orthonormalize(vectors, rank_tol=RANK_TOL):
    """Orthonormal basis of the span of ``vectors``.

    ``vectors`` is an ``(n, k)`` array of column vectors or a sequence of 1-D
    arrays. Dependent directions are dropped at ``rank_tol`` relative to the
    largest input norm, so the result has the numerical rank as its width.
    """
    A = _as_columns(vectors)
    norms = np.sqrt((A * A).sum(axis=0))
    if not np.any(norms >= 1e-300):
        raise AllZeroInput("every input vector is zero")
    return kernels.mgs(A, rank_tol)


def gram_error(basis):
    B = np.asarray(basis)
    return float(np.abs(B.T @ B - np.eye(B.shape[1])).max())


class Subspace:
    """Immutable subspace of R^n with cached ``lambda2`` / ``lambda_inf``."""

    def __init__(self, basis, check=True):
        B = np.array(basis, dtype=np.float64, copy=True)
        if B.ndim == 1:
            B = B[:, None]
        n, D = B.shape
        if n < 2:
            raise DimensionMismatch(f"ambient dimension must be >= 2, got {n}")
        if not 1 <= D <= n:
            raise DimensionMismatch(f"need 1 <= D <= n, got D={D}, n={n}")
        if check:
            err = gram_error(B)
            if err > TOL_ORTHO:
                raise NotOrthonormal(f"Gram matrix deviates from identity by {err:.3e}")
        B.flags.writeable = False
        self.basis = B

    @classmethod
    def span(cls, vectors, rank_tol=RANK_TOL):
        return cls(orthonormalize(vectors, rank_tol))

    @property
    def n(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]

    def __repr__(self):
        return f"Subspace(n={self.n}, dim={self.dim})"

    @cached_property
    def lambda2(self):
        return lambda2(self)

    @cached_property
    def lambda_inf(self):
        return lambda_inf(self)

    def projector(self):
        return self.basis @ self.basis.T


def project(S, y):
    """Orthogonal projection of ``y`` (or of each column of a 2-D ``y``) onto ``S``."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != S.n:
        raise DimensionMismatch(f"vector has length {y.shape[0]}, subspace lives in R^{S.n}")
    B = S.basis
    return B @ (B.T @ y)


def lambda2(S):
    B = S.basis
    return float(np.sqrt((B * B).sum(axis=1)).max())


def lambda_inf(S):
    B = S.basis
    n = B.shape[0]
    step = max(1, _ROW_BLOCK_ENTRIES // n)
    best = 0.0
    for i0 in range(0, n, step):
        rows = B[i0:i0 + step] @ B.T
        best = max(best, float(np.abs(rows).sum(axis=1).max()))
    return best


def sum_spaces(S, T):
    if S.n != T.n:
        raise DimensionMismatch(f"ambient dimensions differ: {S.n} vs {T.n}")
    return Subspace(orthonormalize(np.hstack([S.basis, T.basis])))


def projector_distance(S, T):
    """Max entrywise difference between the two orthogonal projectors."""
    if S.n != T.n:
        raise DimensionMismatch(f"ambient dimensions differ: {S.n} vs {T.n}")
    return float(np.abs(S.projector() - T.projector()).max())
