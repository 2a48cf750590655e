"""Penalized least-squares model selection with sub-gamma noise.

Subpackages by layer: ``linspace`` (subspaces, projections, Lambda constants),
``models`` (partitions, bases, collections), ``noise`` (certified noise
families and seeded sampling), ``bounds`` (closed-form thresholds),
``select`` (penalties, criterion, oracle bound) and ``harness`` (Monte Carlo
experiments behind the ``penselect`` command).
"""

from .bounds import KAPPA, chaining_H, oracle_constant
from .linspace import Subspace, orthonormalize, project
from .models import ModelCollection, ModelSpec, Partition
from .noise import NoiseSpec
from .select import PenaltySpec, SelectionResult, exact_risk, oracle_rhs, penalty, select_model

__version__ = "0.1.0"

__all__ = [
    "KAPPA", "ModelCollection", "ModelSpec", "NoiseSpec", "Partition", "PenaltySpec",
    "SelectionResult", "Subspace", "chaining_H", "exact_risk", "oracle_constant", "oracle_rhs",
    "orthonormalize", "penalty", "project", "select_model",
]
