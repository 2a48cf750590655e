"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The public wrappers pick the implementation through :func:`penselect._accel.backend`.
Both paths compute the same quantity in the same order, so results agree to
rounding; tie-breaking (first strict minimum) is identical.
"""

import numpy as np

from ._accel import backend, njit

# ---------------------------------------------------------------------------
# Modified Gram-Schmidt with one reorthogonalization pass
# ---------------------------------------------------------------------------


@njit
def _mgs_nb(At, rank_tol):
    # At holds the input vectors as rows (k, n) for contiguous access.
    k, n = At.shape
    scale = 0.0
    for c in range(k):
        s = 0.0
        for i in range(n):
            s += At[c, i] * At[c, i]
        s = np.sqrt(s)
        if s > scale:
            scale = s
    Qt = np.empty((k, n))
    r = 0
    v = np.empty(n)
    for c in range(k):
        for i in range(n):
            v[i] = At[c, i]
        for _ in range(2):
            for j in range(r):
                s = 0.0
                for i in range(n):
                    s += Qt[j, i] * v[i]
                for i in range(n):
                    v[i] -= s * Qt[j, i]
        nv = 0.0
        for i in range(n):
            nv += v[i] * v[i]
        nv = np.sqrt(nv)
        if nv > rank_tol * scale:
            for i in range(n):
                Qt[r, i] = v[i] / nv
            r += 1
    return Qt[:r].copy()


def _mgs_np(At, rank_tol):
    k, n = At.shape
    scale = float(np.sqrt((At * At).sum(axis=1)).max())
    Qt = np.empty((k, n))
    r = 0
    for c in range(k):
        v = At[c].copy()
        for _ in range(2):
            for j in range(r):
                v -= (Qt[j] @ v) * Qt[j]
        nv = float(np.sqrt(v @ v))
        if nv > rank_tol * scale:
            Qt[r] = v / nv
            r += 1
    return Qt[:r].copy()


def mgs(A, rank_tol=1e-9, backend_name=None):
    """Orthonormalize the columns of ``A`` (n, k); returns ``Q`` (n, r)."""
    At = np.ascontiguousarray(np.asarray(A, dtype=np.float64).T)
    if backend(backend_name) == "numba":
        Qt = _mgs_nb(At, float(rank_tol))
    else:
        Qt = _mgs_np(At, float(rank_tol))
    return Qt.T


# ---------------------------------------------------------------------------
# Sums of atom gains per model (CSR incidence)
# ---------------------------------------------------------------------------


@njit
def _model_sums_nb(G, indptr, indices):
    M = indptr.shape[0] - 1
    B = G.shape[1]
    out = np.zeros((M, B))
    for m in range(M):
        for p in range(indptr[m], indptr[m + 1]):
            a = indices[p]
            for b in range(B):
                out[m, b] += G[a, b]
    return out


def _segment_sums_np(G, indptr, indices, m0, m1):
    """Row sums for models ``m0:m1`` via ``np.add.reduceat`` (empty rows give 0)."""
    B = G.shape[1]
    out = np.zeros((m1 - m0, B))
    a, b = indptr[m0], indptr[m1]
    if b == a:
        return out
    starts = indptr[m0:m1] - a
    nonempty = indptr[m0 + 1:m1 + 1] > indptr[m0:m1]
    vals = G[indices[a:b]]
    out[nonempty] = np.add.reduceat(vals, starts[nonempty], axis=0)
    return out


def _model_sums_np(G, indptr, indices, chunk_nnz=1 << 21):
    M = indptr.shape[0] - 1
    out = np.empty((M, G.shape[1]))
    for m0, m1 in _model_chunks(indptr, chunk_nnz // max(G.shape[1], 1)):
        out[m0:m1] = _segment_sums_np(G, indptr, indices, m0, m1)
    return out


def _model_chunks(indptr, nnz_budget):
    M = indptr.shape[0] - 1
    nnz_budget = max(int(nnz_budget), 1)
    m0 = 0
    while m0 < M:
        target = indptr[m0] + nnz_budget
        m1 = int(np.searchsorted(indptr, target, side="right")) - 1
        m1 = min(max(m1, m0 + 1), M)
        yield m0, m1
        m0 = m1


def model_sums(G, indptr, indices, backend_name=None):
    """``out[m, b] = sum_{a in model m} G[a, b]``."""
    G = np.ascontiguousarray(G, dtype=np.float64)
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    if backend(backend_name) == "numba":
        return _model_sums_nb(G, indptr, indices)
    return _model_sums_np(G, indptr, indices)


# ---------------------------------------------------------------------------
# Penalized selection: argmin_m  max(|y|^2 - sum gains, 0) + pen[m]
# ---------------------------------------------------------------------------


@njit
def _atom_select_nb(G, yy, indptr, indices, pen):
    M = indptr.shape[0] - 1
    B = G.shape[1]
    best = np.zeros(B, dtype=np.int64)
    best_crit = np.full(B, np.inf)
    acc = np.empty(B)
    for m in range(M):
        for b in range(B):
            acc[b] = 0.0
        for p in range(indptr[m], indptr[m + 1]):
            a = indices[p]
            for b in range(B):
                acc[b] += G[a, b]
        pm = pen[m]
        for b in range(B):
            rss = yy[b] - acc[b]
            if rss < 0.0:
                rss = 0.0
            c = rss + pm
            if c < best_crit[b]:
                best_crit[b] = c
                best[b] = m
    return best, best_crit


def _atom_select_np(G, yy, indptr, indices, pen, chunk_nnz=1 << 21):
    B = G.shape[1]
    best = np.zeros(B, dtype=np.int64)
    best_crit = np.full(B, np.inf)
    for m0, m1 in _model_chunks(indptr, chunk_nnz // max(B, 1)):
        sums = _segment_sums_np(G, indptr, indices, m0, m1)
        crit = np.maximum(yy[None, :] - sums, 0.0) + pen[m0:m1, None]
        loc = np.argmin(crit, axis=0)
        val = crit[loc, np.arange(B)]
        better = val < best_crit
        best[better] = loc[better] + m0
        best_crit[better] = val[better]
    return best, best_crit


def atom_select(G, yy, indptr, indices, pen, backend_name=None):
    """First strict minimizer of the penalized criterion, per column of ``G``.

    Models are scanned in CSR order, so callers encode their tie-break rule
    by ordering the rows. Returns ``(best_row, best_crit)``.
    """
    G = np.ascontiguousarray(G, dtype=np.float64)
    yy = np.ascontiguousarray(yy, dtype=np.float64)
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    pen = np.ascontiguousarray(pen, dtype=np.float64)
    if backend(backend_name) == "numba":
        return _atom_select_nb(G, yy, indptr, indices, pen)
    return _atom_select_np(G, yy, indptr, indices, pen)


# ---------------------------------------------------------------------------
# Greedy delta-separated subset
# ---------------------------------------------------------------------------


@njit
def _greedy_pack_nb(cands, delta):
    T, D = cands.shape
    keep = np.empty(T, dtype=np.int64)
    k = 0
    d2 = delta * delta
    for t in range(T):
        ok = True
        for j in range(k):
            s = 0.0
            q = keep[j]
            for i in range(D):
                diff = cands[t, i] - cands[q, i]
                s += diff * diff
            if s <= d2:
                ok = False
                break
        if ok:
            keep[k] = t
            k += 1
    return keep[:k].copy()


def _greedy_pack_np(cands, delta):
    T, D = cands.shape
    kept = np.empty((T, D))
    keep = []
    d2 = delta * delta
    for t in range(T):
        k = len(keep)
        if k:
            diff = kept[:k] - cands[t]
            if np.min(np.einsum("ij,ij->i", diff, diff)) <= d2:
                continue
        kept[k] = cands[t]
        keep.append(t)
    return np.asarray(keep, dtype=np.int64)


def greedy_pack(cands, delta, backend_name=None):
    """Indices of a greedy subset of ``cands`` whose pairwise distances exceed ``delta``."""
    cands = np.ascontiguousarray(cands, dtype=np.float64)
    if backend(backend_name) == "numba":
        return _greedy_pack_nb(cands, float(delta))
    return _greedy_pack_np(cands, float(delta))
