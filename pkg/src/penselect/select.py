"""Penalized least-squares selection over a :class:`~penselect.models.ModelCollection`.

``crit(m) = |Y - P_m Y|^2 + pen(m)``. Every model is a direct sum of
orthogonal atoms, so ``|Y - P_m Y|^2 = |Y|^2 - sum_{a in m} |P_a Y|^2`` and a
whole collection is scored from one vector of atom gains.

Penalties are taken at equality in their lower-bound form, scaled by an
optional ``multiplier``.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .bounds import KAPPA, oracle_constant, remainder_R, u_factor
from .errors import ConditionViolated, DimensionMismatch, KNotGreaterThanOne, ModeFamilyMismatch
from . import models
from .linspace import project
from .models import ModelSpec, check_conditions

MODES = ("general", "histogram", "piecewise", "trig")
_MODE_FAMILY = {"histogram": "histogram", "piecewise": "piecewise_poly", "trig": "trig"}


@dataclass(frozen=True)
class PenaltySpec:
    mode: str
    K: float
    sigma: float
    c: float
    z: float = None
    a: float = None
    b: float = None
    d: int = None
    multiplier: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown penalty mode {self.mode!r}")
        if not self.K > 1:
            raise KNotGreaterThanOne(f"K must exceed 1, got {self.K}")
        if self.sigma <= 0 or self.c < 0:
            raise ValueError("need sigma > 0 and c >= 0")
        if self.mode != "general" and (self.a is None or self.b is None or self.a <= 0 or self.b <= 0):
            raise ValueError(f"{self.mode} mode needs a > 0 and b > 0")
        if self.mode == "piecewise" and self.d is None:
            raise ValueError("piecewise mode needs d")
        if self.z is not None and self.z < 0:
            raise ValueError("z must be nonnegative")
        if self.multiplier < 1:
            raise ValueError("multiplier below 1 would undercut the admissible penalty")

    @classmethod
    def from_noise(cls, mode, K, noise, **kw):
        return cls(mode, K, noise.sigma, noise.c, **kw)

    def z_for(self, n):
        """Default ``z``: ``log n`` in general mode, ``b log n`` in proposition modes."""
        if self.z is not None:
            return float(self.z)
        return math.log(n) if self.mode == "general" else self.b * math.log(n)

    def to_json(self):
        out = {"mode": self.mode, "K": self.K, "sigma": self.sigma, "c": self.c}
        for k in ("z", "a", "b", "d"):
            if getattr(self, k) is not None:
                out[k] = getattr(self, k)
        if self.multiplier != 1.0:
            out["multiplier"] = self.multiplier
        return out


def _check_mode(spec, coll):
    if spec.mode == "general":
        return
    fam = _MODE_FAMILY[spec.mode]
    if coll.family != fam:
        raise ModeFamilyMismatch(f"{spec.mode} mode needs a {fam} collection, got {coll.family}")
    if spec.mode == "piecewise" and int(spec.d) != coll.d:
        raise ModeFamilyMismatch(f"penalty degree {spec.d} differs from collection degree {coll.d}")
    cond = check_conditions(coll, spec.a)
    key = {"histogram": "condhisto", "piecewise": "condppm", "trig": "trig_dimension"}[spec.mode]
    if not cond[key]:
        raise ConditionViolated(f"{key} fails for a={spec.a}: {cond}")


def u_value(spec, coll):
    """``u`` of general mode for this collection."""
    return u_factor(spec.sigma, spec.c, coll.lambda_bar_inf, coll.lambda2_Sn, coll.n, spec.z_for(coll.n))


def variance_factor(spec, coll):
    """``F`` with ``pen(m) = multiplier * K * F * (D_m + Delta_m)``."""
    _check_mode(spec, coll)
    s, c = spec.sigma, spec.c
    if spec.mode == "general":
        extra = 2.0 * c * u_value(spec, coll) / KAPPA
    elif spec.mode == "histogram":
        extra = 2.0 * c * (s + c) * (spec.b + 2.0) / (spec.a * KAPPA)
    elif spec.mode == "piecewise":
        extra = c * 4.0 * math.sqrt(2.0) * (s + c) * (spec.d + 1) * (spec.b + 2.0) / (spec.a * KAPPA)
    else:
        extra = 4.0 * c * (c + s) * (spec.b + 2.0) / spec.a
    return KAPPA**2 * (s * s + extra)


def penalties(spec, coll):
    """Penalty of every model in collection order."""
    F = variance_factor(spec, coll)
    return spec.multiplier * spec.K * F * (coll.dims + coll.delta)


def penalty(spec, m, coll):
    """Penalty of one model, given as a collection index or a :class:`ModelSpec`."""
    F = variance_factor(spec, coll)
    if isinstance(m, ModelSpec):
        dim, delta = m.dim, m.delta
    else:
        dim, delta = int(coll.dims[m]), float(coll.delta[m])
    return spec.multiplier * spec.K * F * (dim + delta)


def residual_sq(m, Y, coll=None):
    """``|Y - P_m Y|^2`` for a model given as an index (needs ``coll``) or a :class:`ModelSpec`."""
    Y = np.asarray(Y, dtype=np.float64)
    if isinstance(m, ModelSpec):
        if m.family == "trig":
            S = models.trig_space(m.payload, Y.shape[0], coll.Dbar if coll is not None else
                                  (max(m.payload) + 1) // 2) if m.payload else None
        elif m.family == "histogram":
            S = models.histogram_space(m.payload)
        else:
            S = models.piecewise_poly_space(m.payload, m.d)
    else:
        S = coll.space(m)
    if S is None:
        return float(Y @ Y)
    if S.n != Y.shape[0]:
        raise DimensionMismatch(f"model lives in R^{S.n}, Y has length {Y.shape[0]}")
    r = Y - project(S, Y)
    return float(r @ r)


def crit(m, Y, spec=None, coll=None, pen=None):
    """``|Y - P_m Y|^2 + pen(m)``; ``pen`` overrides the value derived from ``spec``."""
    if pen is None:
        pen = penalty(spec, m, coll)
    return residual_sq(m, Y, coll) + pen


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


@dataclass
class SelectionResult:
    chosen_id: object
    chosen_index: int
    crit_values: dict
    residual_sq: np.ndarray
    pen: np.ndarray
    fitted: np.ndarray
    ties: list = field(default_factory=list)
    ids: list = field(default_factory=list, repr=False)

    def to_json(self):
        return {
            "chosen_id": self.chosen_id,
            "crit": float(self.crit_values[self.chosen_id]),
            "per_model": [{"id": i, "residual_sq": float(r), "pen": float(p), "crit": float(r + p)}
                          for i, r, p in zip(self.ids, self.residual_sq, self.pen)],
            "ties": list(self.ties),
        }

    def dumps(self):
        return json.dumps(self.to_json())


def residuals(coll, Y):
    """``|Y - P_m Y|^2`` for every model (clipped at 0); ``Y`` is ``(n,)`` or ``(n, B)``."""
    Y = np.asarray(Y, dtype=np.float64)
    G = coll.atom_gains(Y)
    yy = (Y * Y).sum(axis=0)
    sums = kernels.model_sums(G, coll.indptr, coll.indices)
    rss = np.maximum(yy - sums, 0.0)
    return rss[:, 0] if Y.ndim == 1 else rss


def select_model(Y, coll, spec, pen=None):
    """Minimize ``crit`` over the collection; ties go to the smallest dimension, then collection order."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 1 or Y.shape[0] != coll.n:
        raise DimensionMismatch(f"expected a vector of length {coll.n}")
    pen = penalties(spec, coll) if pen is None else np.asarray(pen, dtype=np.float64)
    rss = residuals(coll, Y)
    cr = rss + pen
    best = cr.min()
    tie_idx = np.flatnonzero(cr == best)
    winner = int(tie_idx[np.lexsort((tie_idx, coll.dims[tie_idx]))[0]])
    ids = coll.ids
    return SelectionResult(
        chosen_id=ids[winner],
        chosen_index=winner,
        crit_values={ids[k]: float(cr[k]) for k in range(len(coll))},
        residual_sq=rss,
        pen=pen,
        fitted=coll.fit(winner, Y),
        ties=[ids[k] for k in tie_idx],
        ids=list(ids),
    )


def select_batch(Y, coll, pen):
    """Selected model index (collection order) for each column of ``Y`` ``(n, B)``."""
    Y = np.asarray(Y, dtype=np.float64)
    order = coll.selection_order
    indptr, indices = coll.ordered_csr
    G = coll.atom_gains(Y)
    yy = (Y * Y).sum(axis=0)
    row, _ = kernels.atom_select(G, yy, indptr, indices, np.asarray(pen, dtype=np.float64)[order])
    return order[row]


# ---------------------------------------------------------------------------
# Risk and the oracle bound
# ---------------------------------------------------------------------------


def exact_risk(f, S, noise):
    """``|f - P_S f|^2 + var * dim(S)``; ``S=None`` stands for ``{0}``.

    ``noise`` is a :class:`~penselect.noise.NoiseSpec` or the variance itself.
    """
    f = np.asarray(f, dtype=np.float64)
    var = noise if isinstance(noise, (int, float)) else noise.variance
    if S is None:
        return float(f @ f)
    r = f - project(S, f)
    return float(r @ r) + var * S.dim


def model_risks(coll, f, noise):
    """Exact risk of every model through atom gains."""
    var = noise if isinstance(noise, (int, float)) else noise.variance
    bias = residuals(coll, f)
    return bias + var * coll.dims


def proposition_R(spec, coll):
    s, c, a, b, n = spec.sigma, spec.c, spec.a, spec.b, coll.n
    F = variance_factor(spec, coll)
    if spec.mode == "histogram":
        tail = 2.0 * (c + s) ** 2 * (b + 2.0) ** 2 / (a * a * n**b)
    elif spec.mode == "piecewise":
        tail = 4.0 * (c + s) ** 2 * (b + 2.0) ** 2 / (a * a * n**b)
    else:
        tail = 4.0 * (b + 2.0) ** 2 * (c + s) ** 2 / (a * a * (2 * coll.Dbar + 1) * n**b)
    return F * coll.sigma_weights + tail


def oracle_terms(coll, spec, f, noise, pen=None):
    """Every ingredient of the oracle bound and the right-hand-side variants.

    Keys: ``inf_term`` and ``argmin`` (index of the best model), ``C``, ``R``,
    ``rhs_bracket`` = ``C (inf + R)``, ``rhs_outside`` = ``C inf + R`` and, when
    ``c = 0``, ``R_corollary`` / ``rhs_corollary`` and ``rhs_c0_limit`` =
    ``C (inf + kappa^2 sigma^2 Sigma)``. ``rhs`` is the primary value:
    the corollary form for ``c = 0`` in general mode, the bracket form otherwise.
    """
    pen = penalties(spec, coll) if pen is None else np.asarray(pen, dtype=np.float64)
    risks = model_risks(coll, f, noise)
    terms = risks + pen
    k = int(np.argmin(terms))
    inf_term = float(terms[k])
    C = oracle_constant(spec.K)
    Sigma = coll.sigma_weights
    if spec.mode == "general":
        z = spec.z_for(coll.n)
        u = u_value(spec, coll)
        R = remainder_R(spec.sigma, spec.c, u, coll.lambda_bar_inf, z, Sigma)
    else:
        z = spec.z_for(coll.n)
        u = None
        R = proposition_R(spec, coll)
    out = {
        "C": C, "Sigma": Sigma, "z": z, "u": u, "R": R,
        "inf_term": inf_term, "argmin": k, "argmin_id": coll.ids[k],
        "per_model": terms,
        "rhs_bracket": C * (inf_term + R),
        "rhs_outside": C * inf_term + R,
    }
    if spec.c == 0:
        K = spec.K
        R_cor = K**3 * KAPPA**2 * spec.sigma**2 * Sigma / (K - 1.0) ** 2
        out["R_corollary"] = R_cor
        out["rhs_corollary"] = C * inf_term + R_cor
        out["rhs_c0_limit"] = C * (inf_term + KAPPA**2 * spec.sigma**2 * Sigma)
    out["rhs"] = out["rhs_corollary"] if spec.c == 0 and spec.mode == "general" else out["rhs_bracket"]
    return out


def oracle_rhs(coll, spec, f, noise, pen=None):
    return oracle_terms(coll, spec, f, noise, pen)["rhs"]
