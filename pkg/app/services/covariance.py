"""
Per-level feature covariance maintenance.

A CovarianceState holds Λ = λI + Σ φφᵀ together with Λ⁻¹ and log det Λ.
Rank-1 updates use the Sherman-Morrison identity for the inverse and the
matrix determinant lemma for the log-determinant; every R-th update both
are recomputed from a Cholesky factorization to bound drift.
"""

import logging
import math
from typing import Any, Dict, Optional

import numpy as np
from scipy import linalg

from app.config import settings
from app.errors import (
    CovarianceContractError,
    DimensionMismatchError,
    FeatureNormError,
    InvalidParameterError,
)

logger = logging.getLogger(__name__)

FEATURE_NORM_TOLERANCE = 1e-9
DET_GROWTH_TOLERANCE = 1e-8
LOG_TWO = math.log(2.0)


def check_feature(phi: np.ndarray, dim: int) -> np.ndarray:
    """Validate a feature vector's dimension and unit-norm bound"""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (dim,):
        raise DimensionMismatchError(f"feature has shape {phi.shape}, expected ({dim},)")
    norm = float(np.linalg.norm(phi))
    if norm > 1.0 + FEATURE_NORM_TOLERANCE:
        raise FeatureNormError(f"feature norm {norm!r} exceeds 1 + {FEATURE_NORM_TOLERANCE}")
    return phi


class CovarianceState:
    """
    Regularized empirical covariance of the features seen at one level.

    Args:
        dim: Feature dimension d
        lam: Ridge regularizer λ
        refactor_interval: Full refactorization period R (None uses settings)
    """

    def __init__(self, dim: int, lam: float, refactor_interval: Optional[int] = None):
        if int(dim) != dim or dim < 1:
            raise InvalidParameterError(f"dimension must be a positive integer, got {dim!r}")
        if not lam > 0:
            raise InvalidParameterError(f"lambda must be positive, got {lam!r}")
        interval = settings.refactor_interval if refactor_interval is None else refactor_interval
        if interval < 1:
            raise InvalidParameterError(f"refactor interval must be >= 1, got {interval!r}")

        self.dim = int(dim)
        self.lam = float(lam)
        self.refactor_interval = int(interval)
        self.matrix = self.lam * np.eye(self.dim)
        self.inverse = np.eye(self.dim) / self.lam
        self.logdet = self.dim * math.log(self.lam)
        self.count = 0
        self.frozen = False

    def update(self, phi: np.ndarray) -> "CovarianceState":
        """Absorb one feature vector: Λ ← Λ + φφᵀ"""
        if self.frozen:
            raise CovarianceContractError("cannot update a frozen covariance snapshot")
        phi = check_feature(phi, self.dim)

        u = self.inverse @ phi
        q = float(phi @ u)
        self.inverse = self.inverse - np.outer(u, u) / (1.0 + q)
        self.inverse = 0.5 * (self.inverse + self.inverse.T)
        self.matrix = self.matrix + np.outer(phi, phi)
        self.logdet += math.log1p(q)
        self.count += 1

        if self.count % self.refactor_interval == 0:
            self.refactor()
        return self

    def refactor(self) -> None:
        """Recompute inverse and log-determinant from the accumulated matrix"""
        factor = linalg.cho_factor(self.matrix, lower=True)
        fresh_logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
        drift = abs(fresh_logdet - self.logdet)
        self.inverse = linalg.cho_solve(factor, np.eye(self.dim))
        self.inverse = 0.5 * (self.inverse + self.inverse.T)
        self.logdet = fresh_logdet
        if drift > 1e-8:
            logger.warning(f"log-det drift {drift:.3e} corrected after {self.count} updates")

    def quad_form(self, phi: np.ndarray) -> float:
        """φᵀΛ⁻¹φ, the un-rooted bonus quadratic form"""
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (self.dim,):
            raise DimensionMismatchError(f"feature has shape {phi.shape}, expected ({self.dim},)")
        return max(0.0, float(phi @ self.inverse @ phi))

    def snapshot(self) -> "CovarianceState":
        """Immutable copy for a deployed policy"""
        clone = CovarianceState.__new__(CovarianceState)
        clone.dim = self.dim
        clone.lam = self.lam
        clone.refactor_interval = self.refactor_interval
        clone.matrix = self.matrix.copy()
        clone.inverse = self.inverse.copy()
        clone.matrix.setflags(write=False)
        clone.inverse.setflags(write=False)
        clone.logdet = self.logdet
        clone.count = self.count
        clone.frozen = True
        return clone

    def to_dict(self) -> Dict[str, Any]:
        """Debug dump: row-major nested lists, round-trip float repr"""
        return {
            "dim": self.dim,
            "lambda": self.lam,
            "matrix": self.matrix.tolist(),
            "inverse": self.inverse.tolist(),
            "logdet": self.logdet,
            "count": self.count,
        }


def new_covariance(d: int, lam: float, refactor_interval: Optional[int] = None) -> CovarianceState:
    """Fresh state Λ = λI"""
    return CovarianceState(d, lam, refactor_interval)


def rank1_update(state: CovarianceState, phi: np.ndarray) -> CovarianceState:
    return state.update(phi)


def quad_form(state: CovarianceState, phi: np.ndarray) -> float:
    return state.quad_form(phi)


def _check_pair(ref_state: CovarianceState, cur_state: CovarianceState) -> None:
    if ref_state.dim != cur_state.dim:
        raise DimensionMismatchError(f"reference dim {ref_state.dim} != current dim {cur_state.dim}")


def check_domination(ref_state: CovarianceState, cur_state: CovarianceState) -> None:
    """Contract: cur.matrix - ref.matrix is positive semidefinite"""
    _check_pair(ref_state, cur_state)
    if cur_state.count < ref_state.count:
        raise CovarianceContractError(
            f"current state absorbed {cur_state.count} updates, reference {ref_state.count}"
        )
    diff = cur_state.matrix - ref_state.matrix
    diff = 0.5 * (diff + diff.T)
    least = float(linalg.eigh(diff, eigvals_only=True, subset_by_index=[0, 0])[0])
    scale = max(1.0, float(np.max(np.abs(cur_state.matrix))))
    if least < -1e-8 * scale:
        raise CovarianceContractError(f"reference is not dominated by current (least eigenvalue {least:.3e})")


def least_domination_eigenvalue(ref_state: CovarianceState, cur_state: CovarianceState) -> float:
    """λ_min(2·Λ_cur⁻¹ − Λ_ref⁻¹) on the explicitly symmetrized matrix"""
    _check_pair(ref_state, cur_state)
    gap = 2.0 * cur_state.inverse - ref_state.inverse
    gap = 0.5 * (gap + gap.T)
    return float(linalg.eigh(gap, eigvals_only=True, subset_by_index=[0, 0])[0])


def switch_required(
    ref_state: CovarianceState,
    cur_state: CovarianceState,
    tolerance: Optional[float] = None,
) -> bool:
    """True iff Λ_ref⁻¹ is not dominated by 2·Λ_cur⁻¹ (beyond tolerance)"""
    check_domination(ref_state, cur_state)
    tol = settings.switch_tolerance if tolerance is None else tolerance
    return least_domination_eigenvalue(ref_state, cur_state) < -tol


def verify_det_growth(ref_state: CovarianceState, cur_state: CovarianceState) -> bool:
    """Whether log det grew by at least log 2 since the reference"""
    return cur_state.logdet >= ref_state.logdet + LOG_TWO - DET_GROWTH_TOLERANCE


def logdet_bound(d: int, updates: int, lam: float = 1.0) -> float:
    """Upper bound d·log d + d·log(K + λ) on log det after K unit-norm updates"""
    return d * math.log(d) + d * math.log(updates + lam)
