"""Closed-form thresholds, constants and series used by the deviation and oracle bounds."""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DeltaOutOfRange, InvalidPartitionSizes, KNotGreaterThanOne, PhiTooSmall
from .noise import trial_generator

KAPPA = 18.0
H_REL_TOL = 1e-12
H_MAX_TERMS = 200


@dataclass(frozen=True)
class ChainingParams:
    v: float
    b: float
    D: int
    kappa: float = KAPPA

    def __post_init__(self):
        if self.v < 0 or self.b < 0:
            raise ValueError("v and b must be nonnegative")
        if self.D < 1:
            raise ValueError("D must be >= 1")
        if self.kappa != KAPPA:
            raise ValueError("kappa is fixed at 18")


def bernstein_threshold(v2, c, u):
    """Level exceeded with probability at most ``exp(-u)``: ``sqrt(2 v2 u) + c u``."""
    return math.sqrt(2.0 * v2 * u) + c * u


def bernstein_tail_prob(x, v2, c):
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 1.0
    return math.exp(-x * x / (2.0 * (v2 + c * x)))


def sup_threshold(p, x):
    """``kappa (sqrt(v^2 (D + x)) + b (D + x))``."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    Dx = p.D + x
    return p.kappa * (math.sqrt(p.v**2 * Dx) + p.b * Dx)


def _h_term(v, b, log_n):
    return v * math.sqrt(2.0 * log_n) + b * log_n


def chaining_H(p, v=None, b=None):
    """Chaining series with ``N_k = 9^{2D} 5^{2kD}``, summed to relative tail 1e-12.

    ``p`` is a :class:`ChainingParams`, or the dimension ``D`` with ``v`` and ``b`` given.
    """
    if not isinstance(p, ChainingParams):
        p = ChainingParams(v=float(v), b=float(b), D=int(p))
    D = p.D
    total = 0.0
    for k in range(H_MAX_TERMS):
        log_n = 2 * D * math.log(9.0) + 2 * k * D * math.log(5.0) + (k + 1) * math.log(2.0)
        term = 2.0**-k * _h_term(p.v, p.b, log_n)
        total += term
        # Terms shrink by a factor close to 1/2 once k >= 2, so the tail is < 2 * term.
        if k >= 2 and 2.0 * term <= H_REL_TOL * total:
            break
    return total


def generic_H(v, b, sizes):
    """Finite chaining sum for nested partitions of sizes ``|A_0| = 1 <= |A_1| <= ...``."""
    sizes = [int(s) for s in sizes]
    if not sizes or sizes[0] != 1:
        raise InvalidPartitionSizes("the coarsest partition must be {T} (sizes[0] == 1)")
    if any(a > b_ for a, b_ in zip(sizes, sizes[1:])):
        raise InvalidPartitionSizes("partition sizes must be nondecreasing")
    total = 0.0
    for k in range(len(sizes) - 1):
        log_n = (k + 1) * math.log(2.0) + math.log(sizes[k + 1]) + math.log(sizes[k])
        total += 2.0**-k * _h_term(v, b, log_n)
    return total


def oracle_constant(K):
    """``K (K^2 + K - 1) / (K - 1)^3``."""
    if not K > 1:
        raise KNotGreaterThanOne(f"K must exceed 1, got {K}")
    return K * (K * K + K - 1.0) / (K - 1.0) ** 3


def u_factor(sigma, c, lambda_bar_inf, lambda2_Sn, n, z):
    """``(c + sigma) Lambda_bar_inf Lambda_2(S_n) log(n^2 e^z)``."""
    if n < 2 or z < 0:
        raise ValueError("need n >= 2 and z >= 0")
    return (c + sigma) * lambda_bar_inf * lambda2_Sn * (2.0 * math.log(n) + z)


def remainder_R(sigma, c, u, lambda_bar_inf, z, Sigma):
    """Remainder of the general oracle inequality."""
    if lambda_bar_inf < 1:
        raise ValueError("Lambda_bar_inf is at least 1 by definition")
    return KAPPA**2 * (sigma**2 + 2.0 * c * u / KAPPA) * Sigma + 2.0 * (u / lambda_bar_inf) ** 2 * math.exp(-z)


def chi2_threshold(sigma, c, u, D, x):
    """``kappa^2 (sigma^2 + 2 c u / kappa) (D + x)``."""
    if D < 1 or x < 0:
        raise ValueError("need D >= 1 and x >= 0")
    return KAPPA**2 * (sigma**2 + 2.0 * c * u / KAPPA) * (D + x)


def chi_inf_tail(sigma, c, lambda2, x, n):
    """Union bound ``2n exp(-x^2 / (2 Lambda_2^2 (sigma^2 + c x)))`` on ``P(|P xi|_inf >= x)``, capped at 1."""
    if x <= 0:
        return 1.0
    return min(1.0, 2.0 * n * math.exp(-x * x / (2.0 * lambda2**2 * (sigma**2 + c * x))))


def joint_sup_level(sigma, c, u, D, x):
    """Level ``z`` solving ``z = kappa (sigma sqrt(D+x) + (c u / z)(D + x))``.

    On ``{|P xi|_inf <= u}`` the norm ``|P xi|_2`` is the supremum over
    ``{t in S : |t|_2 <= 1, |t|_inf <= u / z}``, whose increments are
    sub-gamma with ``v = sigma`` and ``b = c u / z``; ``z`` is exactly the
    matching chaining threshold.
    """
    Dx = D + x
    s = KAPPA * sigma * math.sqrt(Dx)
    return 0.5 * (s + math.sqrt(s * s + 4.0 * KAPPA * c * u * Dx))


def covering_bound(D, delta):
    """``(1 + 2/delta)^D``: covering number of a unit ball by ``delta``-balls."""
    if not 0 < delta <= 1:
        raise DeltaOutOfRange(f"delta must lie in (0, 1], got {delta}")
    if D < 1:
        raise ValueError("D must be >= 1")
    return (1.0 + 2.0 / delta) ** D


def uniform_ball(D, count, rng):
    g = rng.standard_normal((count, D))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random(count)[:, None] ** (1.0 / D)


def packing_check(D, delta, trials, seed=0, candidates=None):
    """Grow a ``delta``-separated subset of the Euclidean unit ball greedily.

    Candidates are ``trials`` uniform points unless ``candidates`` is given.
    The greedy set is a lower witness for the maximal packing, so ``ok`` can
    only fail if the volume bound itself were wrong.
    """
    bound = covering_bound(D, delta)
    if candidates is None:
        candidates = uniform_ball(D, int(trials), trial_generator(seed, 0))
    cands = np.asarray(candidates, dtype=np.float64).reshape(-1, D)
    keep = kernels.greedy_pack(cands, delta)
    found = int(keep.size)
    return {"found_size": found, "bound": bound, "ok": bool(found <= bound), "points": cands[keep]}


def truncated_moment_bound(a, alpha, beta, x0, p):
    """``a x0^p e^{-phi(x0)} (1 + e p! / phi(x0))`` with ``phi(x) = x^2 / (2 (alpha + beta x))``."""
    if a <= 0 or alpha <= 0 or beta < 0:
        raise ValueError("need a, alpha > 0 and beta >= 0")
    if int(p) != p or p < 1:
        raise ValueError("p must be an integer >= 1")
    phi = x0 * x0 / (2.0 * (alpha + beta * x0))
    if phi < 1:
        raise PhiTooSmall(f"phi(x0) = {phi:.6g} < 1")
    return a * x0**p * math.exp(-phi) * (1.0 + math.e * math.factorial(int(p)) / phi)
