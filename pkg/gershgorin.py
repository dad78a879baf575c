"""Gershgorin discs and the GDPA diagonal similarity transform."""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from errors import DimensionError

logger = logging.getLogger(__name__)

DEFAULT_ZERO_GUARD = 1e-8


@dataclass(frozen=True)
class DiscSet:
    centers: np.ndarray
    radii: np.ndarray

    @property
    def left_ends(self) -> np.ndarray:
        return self.centers - self.radii


@dataclass(frozen=True)
class GdpaScaling:
    """Diagonal of S = diag(1/v_1, ..., 1/v_n)"""
    s: np.ndarray
    eigenvalue: Optional[float] = None
    guarded: int = 0


@dataclass(frozen=True)
class AlignmentReport:
    left_ends: np.ndarray
    spread: float
    lambda_min: float
    gct_bound: float
    aligned_bound: float
    aligned: bool


def _square(M) -> np.ndarray:
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    return A


def discs(M) -> DiscSet:
    A = _square(M)
    centers = np.diag(A).copy()
    radii = np.abs(A).sum(axis=1) - np.abs(centers)
    return DiscSet(centers=centers, radii=np.maximum(radii, 0.0))


def left_ends(M) -> np.ndarray:
    return discs(M).left_ends


def gct_lower_bound(M) -> float:
    """Smallest disc left-end; never above lambda_min(M)"""
    ends = left_ends(M)
    return float(ends.min()) if ends.size else float("inf")


def gdpa_scaling(v: np.ndarray, zero_guard: float = DEFAULT_ZERO_GUARD,
                 eigenvalue: Optional[float] = None) -> GdpaScaling:
    """Invert eigenvector entries, pushing near-zero entries out to +-zero_guard"""
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0 or not np.any(v):
        raise ValueError("GDPA scaling needs a nonzero eigenvector")

    small = np.abs(v) < zero_guard
    guarded = int(small.sum())
    if guarded:
        signs = np.where(v[small] < 0, -1.0, 1.0)
        v = v.copy()
        v[small] = signs * zero_guard
        logger.warning(f"Zero guard replaced {guarded} eigenvector entries below {zero_guard:g}")
    return GdpaScaling(s=1.0 / v, eigenvalue=eigenvalue, guarded=guarded)


def similarity_transform(M, scaling: GdpaScaling) -> np.ndarray:
    """S M S^-1 with entry (i, j) = s_i M_ij / s_j; not symmetric in general"""
    A = _square(M)
    s = np.asarray(scaling.s, dtype=float)
    if s.size != A.shape[0]:
        raise DimensionError(f"scaling of length {s.size} does not match matrix {A.shape}")
    return s[:, None] * A / s[None, :]


def aligned_bound(M, v: np.ndarray, zero_guard: float = DEFAULT_ZERO_GUARD) -> float:
    """GCT bound after the GDPA transform built from first eigenvector v"""
    return gct_lower_bound(similarity_transform(M, gdpa_scaling(v, zero_guard)))


def alignment_report(M, v: Optional[np.ndarray] = None,
                     zero_guard: float = DEFAULT_ZERO_GUARD) -> AlignmentReport:
    """Compare transformed disc left-ends against lambda_min.

    When ``v`` is not given the exact first eigenvector is used.
    """
    A = _square(M)
    eigvals, eigvecs = linalg.eigh(A)
    lam = float(eigvals[0])
    if v is None:
        v = eigvecs[:, 0]
    ends = left_ends(similarity_transform(A, gdpa_scaling(v, zero_guard)))
    spread = float(ends.max() - ends.min())
    aligned = spread <= 1e-6 * (1.0 + abs(lam)) and abs(float(ends.min()) - lam) <= 1e-6 * (1.0 + abs(lam))
    if not aligned:
        logger.warning(f"Disc left-ends not aligned: spread {spread:.3e}, lambda_min {lam:.6g}")
    return AlignmentReport(left_ends=ends, spread=spread, lambda_min=lam,
                           gct_bound=gct_lower_bound(A), aligned_bound=float(ends.min()),
                           aligned=aligned)
