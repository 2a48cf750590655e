"""Centered noise families with certified sub-gamma envelopes.

A :class:`NoiseSpec` pairs a family with constants ``(sigma, c)`` such that

    log E exp(lam * xi) <= lam^2 sigma^2 / (2 (1 - |lam| c))   for |lam| < 1/c.

The constants are checked numerically when a NoiseSpec is built
(:func:`verify_subgamma`); the defaults per family are only a starting point.

Randomness is counter based: trial ``t`` of a run seeded with ``seed`` draws
from ``Philox(key=seed, counter=(0, 0, 0, t))``, so any trial can be replayed
on its own and the order in which workers process trials does not matter.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificationFailed, OutOfDomain

MARGIN_TOL = 1e-12
GRID_POINTS = 2048

_PARAMS = {
    "gaussian": ("sd",),
    "centered_poisson": ("mu",),
    "centered_exponential": ("rate",),
    "centered_gamma": ("shape", "rate"),
    "scaled_rademacher": ("a",),
}


def default_certificate(family, params):
    """``(sigma, c)`` shipped for each family."""
    p = params
    if family == "gaussian":
        return float(p["sd"]), 0.0
    if family == "centered_poisson":
        return math.sqrt(p["mu"]), 1.0 / 3.0
    if family == "centered_exponential":
        return 1.0 / p["rate"], 1.0 / p["rate"]
    if family == "centered_gamma":
        return math.sqrt(p["shape"]) / p["rate"], 1.0 / p["rate"]
    if family == "scaled_rademacher":
        return float(p["a"]), 0.0
    raise ValueError(f"unknown noise family {family!r}")


@dataclass(frozen=True)
class NoiseSpec:
    family: str
    params: dict = field(hash=False)
    sigma: float
    c: float

    def __post_init__(self):
        if self.family not in _PARAMS:
            raise ValueError(f"unknown noise family {self.family!r}")
        missing = set(_PARAMS[self.family]) - set(self.params)
        if missing:
            raise ValueError(f"{self.family} needs parameters {sorted(missing)}")
        if any(float(self.params[k]) <= 0 for k in _PARAMS[self.family]):
            raise ValueError(f"{self.family} parameters must be positive: {self.params}")
        if self.sigma <= 0 or self.c < 0:
            raise ValueError("need sigma > 0 and c >= 0")

    @classmethod
    def make(cls, family, sigma=None, c=None, verify=True, **params):
        params = {k: float(v) for k, v in params.items()}
        s0, c0 = default_certificate(family, params)
        spec = cls(family, params, float(s0 if sigma is None else sigma), float(c0 if c is None else c))
        if verify:
            rep = verify_subgamma(spec)
            if not rep["ok"]:
                raise CertificationFailed(
                    f"{family}{params} violates the envelope with sigma={spec.sigma}, c={spec.c}: "
                    f"worst margin {rep['worst_margin']:.3e} at lambda={rep['worst_lambda']:.6g}")
        return spec

    @property
    def variance(self):
        p = self.params
        if self.family == "gaussian":
            return p["sd"] ** 2
        if self.family == "centered_poisson":
            return p["mu"]
        if self.family == "centered_exponential":
            return 1.0 / p["rate"] ** 2
        if self.family == "centered_gamma":
            return p["shape"] / p["rate"] ** 2
        return p["a"] ** 2

    def to_json(self):
        return {"family": self.family, "params": dict(self.params), "sigma": self.sigma, "c": self.c}

    @classmethod
    def from_json(cls, doc, verify=True):
        return cls.make(doc["family"], sigma=doc.get("sigma"), c=doc.get("c"), verify=verify,
                        **doc.get("params", {}))


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------


def trial_generator(seed, trial=0):
    key = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(trial)]))


def draw(spec, n, rng):
    """``n`` centered draws from ``spec`` using generator ``rng``."""
    p = spec.params
    f = spec.family
    if f == "gaussian":
        return p["sd"] * rng.standard_normal(n)
    if f == "centered_poisson":
        return rng.poisson(p["mu"], n) - p["mu"]
    if f == "centered_exponential":
        scale = 1.0 / p["rate"]
        return rng.exponential(scale, n) - scale
    if f == "centered_gamma":
        scale = 1.0 / p["rate"]
        return rng.gamma(p["shape"], scale, n) - p["shape"] * scale
    return p["a"] * (2.0 * rng.integers(0, 2, n) - 1.0)


def sample(spec, n, seed, trial=0):
    """Reproducible draw: the same ``(spec, n, seed, trial)`` always returns the same vector."""
    if n < 1:
        raise ValueError("n must be positive")
    return draw(spec, n, trial_generator(seed, trial))


def sample_trials(spec, n, seed, t0, t1):
    """Rows ``t0..t1-1`` of the trial matrix, each row from its own counter stream."""
    out = np.empty((t1 - t0, n))
    for i, t in enumerate(range(t0, t1)):
        out[i] = draw(spec, n, trial_generator(seed, t))
    return out


# ---------------------------------------------------------------------------
# Laplace transforms and the sub-gamma check
# ---------------------------------------------------------------------------


def _log_cosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0)


def log_laplace(spec, lam):
    """Closed-form ``log E exp(lam * xi)``; raises :class:`OutOfDomain` past the pole."""
    lam_arr = np.asarray(lam, dtype=np.float64)
    p = spec.params
    f = spec.family
    if f in ("centered_exponential", "centered_gamma"):
        if np.any(lam_arr >= p["rate"]):
            raise OutOfDomain(f"lambda must be < rate = {p['rate']}")
    out = _log_laplace_unchecked(spec, lam_arr)
    return float(out) if np.ndim(lam) == 0 else out


def _log_laplace_unchecked(spec, lam):
    p = spec.params
    f = spec.family
    if f == "gaussian":
        return lam * lam * p["sd"] ** 2 / 2.0
    if f == "centered_poisson":
        return p["mu"] * np.expm1(lam) - p["mu"] * lam
    if f in ("centered_exponential", "centered_gamma"):
        k = p.get("shape", 1.0)
        t = lam / p["rate"]
        with np.errstate(divide="ignore", invalid="ignore"):
            val = k * (-np.log1p(-t) - t)
        return np.where(t < 1.0, val, np.inf)
    return _log_cosh(p["a"] * lam)


def envelope(spec, lam):
    lam = np.asarray(lam, dtype=np.float64)
    denom = 1.0 - np.abs(lam) * spec.c
    with np.errstate(divide="ignore"):
        return np.where(denom > 0, lam * lam * spec.sigma**2 / (2.0 * np.where(denom > 0, denom, 1.0)), np.inf)


def subgamma_grid(spec, grid_points=GRID_POINTS):
    """Symmetric grid, geometric in the distance to the boundary ``1/c`` (or ``L = 50/sigma``)."""
    if grid_points < 100:
        raise ValueError("grid_points must be >= 100")
    if spec.c > 0:
        edge = 1.0 / spec.c
        gaps = np.geomspace(1e-12, 1.0, grid_points)
        near_edge = edge * (1.0 - gaps)
        near_zero = edge * np.geomspace(1e-9, 1e-2, grid_points // 4)
        pos = np.unique(np.concatenate([near_zero, near_edge[near_edge > 0]]))
    else:
        edge = 50.0 / spec.sigma
        pos = edge * np.geomspace(1e-9, 1.0, grid_points)
    return np.concatenate([-pos[::-1], pos])


def verify_subgamma(spec, grid_points=GRID_POINTS):
    """Largest ``log_laplace - envelope`` over the grid; ``ok`` iff it is ``<= 1e-12``."""
    lam = subgamma_grid(spec, grid_points)
    margin = _log_laplace_unchecked(spec, lam) - envelope(spec, lam)
    i = int(np.argmax(margin))
    worst = float(margin[i])
    return {"ok": bool(worst <= MARGIN_TOL), "worst_margin": worst, "worst_lambda": float(lam[i]),
            "grid_points": int(lam.size)}


def mgf_probe_lambda(spec):
    """Interior point for the empirical Laplace check.

    ``1/(4c)`` keeps ``E exp(2 lam xi)`` finite for the exponential and gamma
    families (``1/(2c)`` would sit exactly on their second-moment pole).
    """
    return 1.0 / (4.0 * spec.c) if spec.c > 0 else 1.0 / spec.sigma


def empirical_log_mgf(xi, lam):
    """``(log mean exp(lam xi), delta-method standard error)``."""
    w = np.exp(lam * np.asarray(xi, dtype=np.float64))
    mean = float(w.mean())
    se = float(w.std(ddof=1) / (mean * math.sqrt(w.size)))
    return math.log(mean), se


DEFAULTS = {
    "gaussian": {"sd": 1.0},
    "centered_poisson": {"mu": 3.0},
    "centered_exponential": {"rate": 1.0},
    "centered_gamma": {"shape": 2.0, "rate": 1.5},
    "scaled_rademacher": {"a": 2.0},
}


def default_specs():
    """One certified spec per family, with the parameters used across the test suite."""
    return {f: NoiseSpec.make(f, **p) for f, p in DEFAULTS.items()}
