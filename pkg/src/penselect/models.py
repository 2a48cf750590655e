"""Model families: histograms, piecewise polynomials, trigonometric subsets.

Every model ``S_m`` is a direct sum of mutually orthogonal *atoms*: the blocks
of a partition (one dimension for histograms, ``d + 1`` for piecewise
polynomials) or single trigonometric vectors. A :class:`ModelCollection`
stores models as a CSR incidence between models and a shared atom table, so

    |Y - P_m Y|^2 = |Y|^2 - sum_{a in m} |P_a Y|^2

is evaluated for hundreds of thousands of models from a handful of atom
gains. That identity is what the selection kernels exploit.
"""

import itertools
import json
import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from . import linspace
from .errors import BlockTooSmall, DimensionMismatch, EmptySubset, InvalidPartition
from .linspace import Subspace

FAMILIES = ("histogram", "piecewise_poly", "trig")
PAIR_BUDGET = 10_000


# ---------------------------------------------------------------------------
# Partitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Partition:
    """Partition of ``{1, ..., n}`` into consecutive blocks.

    Stored by the right end of each block, so ``ends[-1] == n``.
    """

    ends: tuple

    def __post_init__(self):
        ends = tuple(int(e) for e in self.ends)
        if not ends:
            raise InvalidPartition("a partition needs at least one block")
        prev = 0
        for e in ends:
            if e <= prev:
                raise InvalidPartition(f"block ends must increase strictly: {ends}")
            prev = e
        object.__setattr__(self, "ends", ends)

    @classmethod
    def from_blocks(cls, blocks, n=None):
        blocks = [(int(lo), int(hi)) for lo, hi in blocks]
        expect = 1
        for lo, hi in blocks:
            if lo != expect or hi < lo:
                raise InvalidPartition(f"blocks must be consecutive and cover 1..n: {blocks}")
            expect = hi + 1
        if n is not None and expect - 1 != n:
            raise InvalidPartition(f"blocks cover 1..{expect - 1}, expected 1..{n}")
        return cls(tuple(hi for _, hi in blocks))

    @classmethod
    def trivial(cls, n):
        return cls((n,))

    @classmethod
    def equal(cls, n, k):
        """``k`` blocks of (nearly) equal size; the first ``n % k`` get one extra point."""
        if not 1 <= k <= n:
            raise InvalidPartition(f"cannot split {n} points into {k} blocks")
        sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
        return cls(tuple(itertools.accumulate(sizes)))

    @property
    def n(self):
        return self.ends[-1]

    @property
    def blocks(self):
        starts = (1,) + tuple(e + 1 for e in self.ends[:-1])
        return tuple(zip(starts, self.ends))

    @property
    def sizes(self):
        return tuple(hi - lo + 1 for lo, hi in self.blocks)

    def __len__(self):
        return len(self.ends)


def refine(m, other):
    """Common refinement ``{I & I'}``; for consecutive blocks it merges the cut points."""
    if m.n != other.n:
        raise InvalidPartition(f"partitions of different sets: n={m.n} vs n={other.n}")
    return Partition(tuple(sorted(set(m.ends) | set(other.ends))))


def _dyadic_node_sets(n, min_block):
    """Node table and, per partition, the tuple of node ids (trivial partition first)."""
    nodes = []

    def rec(lo, hi):
        nid = len(nodes)
        nodes.append((lo, hi))
        out = [(nid,)]
        size = hi - lo + 1
        left = size // 2
        if left >= min_block and size - left >= min_block:
            L = rec(lo, lo + left - 1)
            R = rec(lo + left, hi)
            out.extend(a + b for a in L for b in R)
        return out

    sets = rec(1, n)
    return np.asarray(nodes, dtype=np.int64), sets


def dyadic_partitions(n, min_block):
    """All partitions reachable by recursive midpoint splits with blocks ``>= min_block``.

    Odd blocks put the extra point on the right half.
    """
    if n < 2 or not 1 <= min_block <= n:
        raise InvalidPartition(f"need n >= 2 and 1 <= min_block <= n (n={n}, min_block={min_block})")
    nodes, sets = _dyadic_node_sets(n, min_block)
    his = nodes[:, 1]
    return [Partition(tuple(sorted(int(his[a]) for a in s))) for s in sets]


# ---------------------------------------------------------------------------
# Bases
# ---------------------------------------------------------------------------


@lru_cache(maxsize=512)
def _poly_block_basis(size, d, nodes):
    if d + 1 > size:
        raise BlockTooSmall(f"block of size {size} cannot carry degree {d}")
    N = size
    if nodes == "chebyshev":
        theta = (np.arange(N) + 0.5) * np.pi / N
        cols = [np.full(N, 1.0 / math.sqrt(N))]
        cols += [math.sqrt(2.0 / N) * np.cos(j * theta) for j in range(1, d + 1)]
        Q = np.column_stack(cols)
    elif nodes == "equispaced":
        # Orthonormal polynomials on N equispaced points (Gram polynomials),
        # via Lanczos with full reorthogonalization.
        t = np.linspace(-1.0, 1.0, N) if N > 1 else np.zeros(1)
        Q = np.empty((N, d + 1))
        Q[:, 0] = 1.0 / math.sqrt(N)
        for j in range(d):
            q = t * Q[:, j]
            for _ in range(2):
                q -= Q[:, : j + 1] @ (Q[:, : j + 1].T @ q)
            Q[:, j + 1] = q / np.linalg.norm(q)
    else:
        raise ValueError(f"unknown node layout {nodes!r}")
    Q.flags.writeable = False
    return Q


def poly_block_basis(size, d, nodes="equispaced"):
    """``(size, d + 1)`` orthonormal basis of degree-``<= d`` polynomials on one block.

    ``nodes="equispaced"`` spans the polynomials evaluated at the block's own
    grid points, i.e. the restriction of ``P(i / n)``. ``nodes="chebyshev"``
    returns ``sqrt(2/N) cos(j (k + 1/2) pi / N)``: orthonormal with sup-norm
    at most ``sqrt(2/N)``, but for ``d >= 1`` and ``N > d + 1`` its span is a
    different space (polynomials in the Chebyshev node, not in ``i``).
    """
    return _poly_block_basis(int(size), int(d), nodes)


def histogram_space(m):
    n = m.n
    B = np.zeros((n, len(m)))
    for k, (lo, hi) in enumerate(m.blocks):
        B[lo - 1:hi, k] = 1.0 / math.sqrt(hi - lo + 1)
    return Subspace(B)


def piecewise_poly_space(m, d, nodes="equispaced"):
    if d < 0:
        raise ValueError("degree must be nonnegative")
    small = [s for s in m.sizes if s < d + 1]
    if small:
        raise BlockTooSmall(f"degree {d} needs blocks of size >= {d + 1}; got {min(small)}")
    n = m.n
    B = np.zeros((n, (d + 1) * len(m)))
    for k, (lo, hi) in enumerate(m.blocks):
        B[lo - 1:hi, k * (d + 1):(k + 1) * (d + 1)] = poly_block_basis(hi - lo + 1, d, nodes)
    return Subspace(B)


def trig_vectors(n, Dbar):
    """``(n, 2 Dbar + 1)`` matrix with columns ``phi_0, ..., phi_{2 Dbar}`` at ``x_i = i / n``."""
    if 2 * Dbar + 1 > n:
        raise ValueError(f"2*Dbar+1 = {2 * Dbar + 1} exceeds n = {n}")
    x = np.arange(1, n + 1) / n
    cols = [np.full(n, 1.0 / math.sqrt(n))]
    for j in range(1, Dbar + 1):
        cols.append(math.sqrt(2.0 / n) * np.cos(2 * math.pi * j * x))
        cols.append(math.sqrt(2.0 / n) * np.sin(2 * math.pi * j * x))
    return np.column_stack(cols)


def trig_space(subset, n, Dbar):
    subset = sorted({int(j) for j in subset})
    if not subset:
        raise EmptySubset("the empty trigonometric model is the zero space")
    if subset[0] < 0 or subset[-1] > 2 * Dbar:
        raise ValueError(f"subset must lie in 0..{2 * Dbar}: {subset}")
    return Subspace(trig_vectors(n, Dbar)[:, subset])


def structural_lambda_bounds(family, min_block=None, n=None, d=0, size=None, phi=None):
    """Bounds ``(Lambda_2^2, Lambda_inf)`` for an orthonormal system localized on blocks.

    Per family: histogram ``|J| = 1, Phi = 1``; piecewise polynomial
    ``|J| = d + 1, Phi = sqrt 2``; trig ``|J| = size`` (the subset size),
    ``Phi = sqrt 2`` with the single block ``{1..n}``. ``phi`` overrides the
    family value. ``n`` enables the ``sqrt(n) Lambda_2`` cap on ``Lambda_inf``.
    """
    if family == "histogram":
        J, Phi = 1, 1.0
    elif family == "piecewise_poly":
        J, Phi = d + 1, math.sqrt(2.0)
    elif family == "trig":
        if size is None or n is None:
            raise ValueError("trig bounds need the subset size and n")
        J, Phi, min_block = size, math.sqrt(2.0), n
    else:
        raise ValueError(f"unknown family {family!r}")
    if phi is not None:
        Phi = float(phi)
    lam2sq = min(J * Phi**2 / min_block, 1.0)
    laminf = J * Phi**2
    if n is not None:
        laminf = min(laminf, math.sqrt(n) * math.sqrt(lam2sq))
    return lam2sq, laminf


# ---------------------------------------------------------------------------
# Collections
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    id: object
    family: str
    payload: object  # Partition, or a tuple of trig indices
    delta: float
    d: int = 0

    @property
    def dim(self):
        if self.family == "trig":
            return len(self.payload)
        return (self.d + 1) * len(self.payload)


class _ModelView(Sequence):
    def __init__(self, coll):
        self._coll = coll

    def __len__(self):
        return len(self._coll)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self._coll.model(i) for i in range(*k.indices(len(self)))]
        return self._coll.model(k)


def default_delta(family, size, Dbar=None):
    """Default weight: ``|m| + log 2`` for partitions, ``log C(2Dbar+1, |m|) + |m|`` for trig."""
    if family == "trig":
        return math.log(math.comb(2 * Dbar + 1, size)) + size
    return size + math.log(2.0)


class ModelCollection:
    """Indexed family of models sharing one ambient dimension and family.

    ``atoms`` is ``(A, 2)`` (1-based ``lo, hi``) for partition families and
    ``(A,)`` trigonometric indices for ``trig``. Model ``k`` owns atoms
    ``indices[indptr[k]:indptr[k + 1]]``.
    """

    def __init__(self, n, family, atoms, indptr, indices, delta, ids=None, d=0, Dbar=None,
                 pair_budget=PAIR_BUDGET, a=None, nodes="equispaced"):
        if family not in FAMILIES:
            raise ValueError(f"unknown family {family!r}")
        self.n = int(n)
        self.family = family
        self.d = int(d) if family == "piecewise_poly" else 0
        self.Dbar = None if Dbar is None else int(Dbar)
        self.nodes = nodes
        self.atoms = np.asarray(atoms, dtype=np.int64)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.delta = np.asarray(delta, dtype=np.float64)
        M = self.indptr.shape[0] - 1
        if M < 1:
            raise ValueError("a collection needs at least one model")
        if self.delta.shape != (M,) or np.any(self.delta < 0):
            raise ValueError("need one nonnegative weight per model")
        self.ids = list(range(M)) if ids is None else list(ids)
        if len(self.ids) != M:
            raise ValueError("need one id per model")
        if family == "trig":
            if self.Dbar is None:
                raise ValueError("trig collections need Dbar")
            if 2 * self.Dbar + 1 > self.n:
                raise ValueError("trig collections need 2*Dbar+1 <= n")
        else:
            sizes = self.atoms[:, 1] - self.atoms[:, 0] + 1
            if np.any(sizes < self.d + 1):
                raise BlockTooSmall(f"degree {self.d} needs blocks of size >= {self.d + 1}")
        for arr in (self.atoms, self.indptr, self.indices, self.delta):
            arr.flags.writeable = False
        self.pair_budget = pair_budget
        self.sigma_weights, self.lambda_bar_inf, self.lambda2_Sn = collection_constants(self, pair_budget)
        self.conditions = None if a is None else check_conditions(self, a)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_specs(cls, n, specs, Dbar=None, **kw):
        specs = list(specs)
        if not specs:
            raise ValueError("a collection needs at least one model")
        family = specs[0].family
        d = specs[0].d
        if any(s.family != family or s.d != d for s in specs):
            raise ValueError("all models of a collection share family and degree")
        atom_ids = {}
        indptr = [0]
        indices = []
        for s in specs:
            if family == "trig":
                keys = sorted({int(j) for j in s.payload})
            else:
                if s.payload.n != n:
                    raise InvalidPartition(f"model {s.id!r} partitions 1..{s.payload.n}, expected 1..{n}")
                keys = list(s.payload.blocks)
            for key in keys:
                indices.append(atom_ids.setdefault(key, len(atom_ids)))
            indptr.append(len(indices))
        atoms = list(atom_ids)
        if family == "trig":
            if Dbar is None:
                Dbar = (max(atoms, default=0) + 1) // 2
            if atoms and (min(atoms) < 0 or max(atoms) > 2 * Dbar):
                raise ValueError(f"trig indices must lie in 0..{2 * Dbar}")
            atoms = np.asarray(atoms, dtype=np.int64).reshape(-1)
        else:
            atoms = np.asarray(atoms, dtype=np.int64).reshape(-1, 2)
        return cls(n, family, atoms, indptr, indices, [s.delta for s in specs],
                   ids=[s.id for s in specs], d=d, Dbar=Dbar, **kw)

    @classmethod
    def dyadic(cls, n, min_block, family="histogram", d=0, delta=None, **kw):
        """Dyadic split-tree collection; ``delta`` overrides the default weights."""
        if n < 2 or not 1 <= min_block <= n:
            raise InvalidPartition(f"need n >= 2 and 1 <= min_block <= n (n={n}, min_block={min_block})")
        if family == "piecewise_poly" and min_block < d + 1:
            raise BlockTooSmall(f"degree {d} needs min_block >= {d + 1}")
        nodes, sets = _dyadic_node_sets(n, min_block)
        lengths = np.fromiter(map(len, sets), dtype=np.int64, count=len(sets))
        indptr = np.concatenate([[0], np.cumsum(lengths)])
        indices = np.fromiter(itertools.chain.from_iterable(sets), dtype=np.int64, count=int(indptr[-1]))
        del sets
        if delta is None:
            delta = lengths + math.log(2.0)
        return cls(n, family, nodes, indptr, indices, delta, d=d, **kw)

    @classmethod
    def trig(cls, n, Dbar, kind="nested", include_empty=False, delta=None, **kw):
        """Nested ``{0..2k}`` subsets or all subsets of ``{0..2Dbar}``."""
        full = range(2 * Dbar + 1)
        if kind == "nested":
            subsets = [tuple(range(2 * k + 1)) for k in range(Dbar + 1)]
        elif kind == "all":
            subsets = [c for r in range(1, 2 * Dbar + 2) for c in itertools.combinations(full, r)]
        else:
            raise ValueError(f"unknown trig collection kind {kind!r}")
        if include_empty:
            subsets = [()] + subsets
        specs = [ModelSpec(i, "trig", s, default_delta("trig", len(s), Dbar) if delta is None else delta)
                 for i, s in enumerate(subsets)]
        return cls.from_specs(n, specs, Dbar=Dbar, **kw)

    # -- accessors ----------------------------------------------------------

    def __len__(self):
        return self.indptr.shape[0] - 1

    def __repr__(self):
        return f"ModelCollection(family={self.family!r}, n={self.n}, models={len(self)})"

    @property
    def models(self):
        return _ModelView(self)

    def atoms_of(self, k):
        return self.indices[self.indptr[k]:self.indptr[k + 1]]

    def partition(self, k):
        if self.family == "trig":
            raise TypeError("trig models are index subsets, not partitions")
        his = sorted(int(self.atoms[a, 1]) for a in self.atoms_of(k))
        return Partition(tuple(his))

    def subset(self, k):
        if self.family != "trig":
            raise TypeError("only trig models are index subsets")
        return tuple(sorted(int(self.atoms[a]) for a in self.atoms_of(k)))

    def model(self, k):
        if not -len(self) <= k < len(self):
            raise IndexError(k)
        k %= len(self)
        payload = self.subset(k) if self.family == "trig" else self.partition(k)
        return ModelSpec(self.ids[k], self.family, payload, float(self.delta[k]), self.d)

    @cached_property
    def atom_dims(self):
        per = 1 if self.family != "piecewise_poly" else self.d + 1
        return np.full(self.atoms.shape[0], per, dtype=np.int64)

    @cached_property
    def dims(self):
        counts = np.diff(self.indptr)
        if self.family == "piecewise_poly":
            return counts * (self.d + 1)
        return counts

    @cached_property
    def selection_order(self):
        """Tie-break permutation: smallest dimension first, then collection order."""
        return np.lexsort((np.arange(len(self)), self.dims))

    @cached_property
    def ordered_csr(self):
        order = self.selection_order
        lengths = np.diff(self.indptr)[order]
        indptr = np.concatenate([[0], np.cumsum(lengths)])
        starts = self.indptr[:-1][order]
        # Gather each model's atom slice in the new order.
        rel = np.arange(indptr[-1]) - np.repeat(indptr[:-1], lengths)
        indices = self.indices[np.repeat(starts, lengths) + rel]
        return indptr, indices

    def space(self, k):
        """Subspace of model ``k``; ``None`` for the empty trig model."""
        if self.family == "trig":
            sub = self.subset(k)
            return trig_space(sub, self.n, self.Dbar) if sub else None
        m = self.partition(k)
        if self.family == "histogram":
            return histogram_space(m)
        return piecewise_poly_space(m, self.d, self.nodes)

    def finest(self):
        """Common refinement of all partitions (the role of the finest model)."""
        if self.family == "trig":
            raise TypeError("trig collections have no partitions")
        used = np.unique(self.indices)
        return Partition(tuple(sorted(set(int(h) for h in self.atoms[used, 1]))))

    def sum_space(self):
        """The sum of all models, or ``None`` when it is ``{0}``."""
        if self.family == "trig":
            used = sorted(set(int(self.atoms[a]) for a in np.unique(self.indices)))
            return trig_space(used, self.n, self.Dbar) if used else None
        m = self.finest()
        if self.family == "histogram":
            return histogram_space(m)
        return piecewise_poly_space(m, self.d, self.nodes)

    # -- projections through atoms -----------------------------------------

    @cached_property
    def _trig_matrix(self):
        return trig_vectors(self.n, self.Dbar)[:, self.atoms]

    def atom_gains(self, Y):
        """``|P_a Y|^2`` for every atom; ``Y`` is ``(n,)`` or ``(n, B)``; returns ``(A, B)``."""
        Y = np.asarray(Y, dtype=np.float64)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.shape[0] != self.n:
            raise DimensionMismatch(f"expected vectors of length {self.n}")
        if self.family == "trig":
            return (self._trig_matrix.T @ Y) ** 2
        lo, hi = self.atoms[:, 0], self.atoms[:, 1]
        if self.d == 0:
            csum = np.vstack([np.zeros((1, Y.shape[1])), np.cumsum(Y, axis=0)])
            s = csum[hi] - csum[lo - 1]
            return s * s / (hi - lo + 1)[:, None]
        G = np.empty((self.atoms.shape[0], Y.shape[1]))
        for a, (l, h) in enumerate(zip(lo, hi)):
            coef = poly_block_basis(h - l + 1, self.d, self.nodes).T @ Y[l - 1:h]
            G[a] = (coef * coef).sum(axis=0)
        return G

    def fit(self, k, Y):
        """Least-squares fit ``P_{S_k} Y`` assembled atom by atom."""
        Y = np.asarray(Y, dtype=np.float64)
        out = np.zeros_like(Y)
        for a in self.atoms_of(k):
            if self.family == "trig":
                phi = self._trig_matrix[:, a]
                out += np.multiply.outer(phi, phi @ Y) if Y.ndim > 1 else phi * (phi @ Y)
            else:
                l, h = int(self.atoms[a, 0]), int(self.atoms[a, 1])
                Q = poly_block_basis(h - l + 1, self.d, self.nodes)
                out[l - 1:h] = Q @ (Q.T @ Y[l - 1:h])
        return out

    # -- serialization ------------------------------------------------------

    def to_json(self):
        doc = {"n": self.n, "family": self.family}
        if self.family == "piecewise_poly":
            doc["d"] = self.d
        if self.family == "trig":
            doc["Dbar"] = self.Dbar
        models = []
        for k in range(len(self)):
            entry = {"id": self.ids[k]}
            if self.family == "trig":
                entry["subset"] = list(self.subset(k))
            else:
                entry["blocks"] = [list(b) for b in self.partition(k).blocks]
            entry["delta"] = float(self.delta[k])
            models.append(entry)
        doc["models"] = models
        return doc

    def dumps(self):
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, doc, **kw):
        if isinstance(doc, str):
            doc = json.loads(doc)
        n = int(doc["n"])
        family = doc["family"]
        d = int(doc.get("d", 0))
        Dbar = doc.get("Dbar")
        specs = []
        for i, e in enumerate(doc["models"]):
            if family == "trig":
                payload = tuple(int(j) for j in e["subset"])
                size = len(payload)
            else:
                payload = Partition.from_blocks(e["blocks"], n)
                size = len(payload)
            delta = e.get("delta")
            if delta is None:
                delta = default_delta(family, size, Dbar)
            specs.append(ModelSpec(e.get("id", i), family, payload, float(delta), d))
        return cls.from_specs(n, specs, Dbar=Dbar, **kw)


def collection_constants(coll, pair_budget=PAIR_BUDGET):
    """``(Sigma, Lambda_bar_inf, Lambda_2(S_n))`` for a collection.

    ``Lambda_bar_inf`` is an exact sweep over all pairs ``S_m + S_m'`` when
    ``|M|^2 <= pair_budget``; otherwise the family's structural value
    (1 for histograms, ``2(d + 1)`` for piecewise polynomials,
    ``sqrt(2(2 Dbar + 1))`` for trig).
    """
    sigma = float(np.exp(-np.asarray(coll.delta)).sum())
    M = len(coll)
    if M * M <= pair_budget:
        spaces = [coll.space(k) for k in range(M)]
        lam = 0.0
        for i in range(M):
            for j in range(i, M):
                Si, Sj = spaces[i], spaces[j]
                if Si is None and Sj is None:
                    continue
                if Si is None or Sj is None:
                    S = Si if Sj is None else Sj
                elif i == j:
                    S = Si
                else:
                    S = linspace.sum_spaces(Si, Sj)
                lam = max(lam, S.lambda_inf)
        coll.lambda_bar_method = "exact"
    else:
        if coll.family == "histogram":
            lam = 1.0
        elif coll.family == "piecewise_poly":
            lam = 2.0 * (coll.d + 1)
        else:
            lam = math.sqrt(2.0 * (2 * coll.Dbar + 1))
        coll.lambda_bar_method = "structural"
    lam_bar = max(lam, 1.0)
    Sn = coll.sum_space()
    lam2 = 0.0 if Sn is None else Sn.lambda2
    return sigma, lam_bar, lam2


def check_conditions(coll, a):
    """Size conditions under which the proposition-specific penalties apply."""
    n = coll.n
    L = a * a * math.log(n) ** 2
    if coll.family == "histogram":
        min_block = min(coll.finest().sizes)
        return {"condhisto": bool(min_block >= L), "min_block": min_block, "threshold": L}
    if coll.family == "piecewise_poly":
        min_block = min(coll.finest().sizes)
        t = (coll.d + 1) * L
        return {"condppm": bool(min_block >= t >= coll.d + 1), "min_block": min_block, "threshold": t}
    limit = math.sqrt(n) / (a * math.log(n))
    return {"trig_dimension": bool(2 * coll.Dbar + 1 <= limit), "size": 2 * coll.Dbar + 1, "threshold": limit}
