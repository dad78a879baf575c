"""Smallest eigenpair of a real symmetric matrix.

The iterative solver is a single-vector LOBPCG: every step runs
Rayleigh-Ritz on span{x, r, p} (current iterate, residual, previous
direction). It does not assume the matrix is positive definite.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg

from errors import DimensionError, EigensolverError, SizeCapError

logger = logging.getLogger(__name__)

START_SEED = 0
START_PERTURBATION = 1e-2
DEFAULT_DENSE_CAP = 64


@dataclass(frozen=True)
class EigOptions:
    tol: float = 1e-4
    max_iter: int = 200
    warm_start: Optional[np.ndarray] = None
    dense_cap: int = DEFAULT_DENSE_CAP

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")

    def with_warm_start(self, v: Optional[np.ndarray]) -> "EigOptions":
        return EigOptions(tol=self.tol, max_iter=self.max_iter, warm_start=v, dense_cap=self.dense_cap)


@dataclass(frozen=True)
class EigResult:
    eigenvalue: float
    v: np.ndarray
    iterations: int
    residual: float
    converged: bool


class DenseEig(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray


def _checked(M) -> np.ndarray:
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise EigensolverError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        raise EigensolverError("empty matrix has no eigenpairs")
    if not np.all(np.isfinite(A)):
        raise EigensolverError("matrix has non-finite entries")
    return A


def canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip v so that its first non-negligible entry is positive"""
    scale = np.abs(v).max()
    if scale == 0:
        return v
    idx = np.flatnonzero(np.abs(v) > 1e-12 * scale)[0]
    return -v if v[idx] < 0 else v


def default_start(n: int) -> np.ndarray:
    """Normalized all-ones vector plus a fixed-seed perturbation"""
    rng = np.random.default_rng(START_SEED)
    x = np.ones(n) / np.sqrt(n) + START_PERTURBATION * rng.standard_normal(n)
    return x / np.linalg.norm(x)


def smallest_eigenpair(M, opts: EigOptions = EigOptions()) -> EigResult:
    A = _checked(M)
    n = A.shape[0]
    threshold = opts.tol * (1.0 + linalg.norm(A, "fro"))

    x = None
    if opts.warm_start is not None:
        w = np.asarray(opts.warm_start, dtype=float).ravel()
        if w.size != n:
            raise DimensionError(f"warm start of length {w.size} does not match matrix of size {n}")
        if np.linalg.norm(w) > 0:
            x = w / np.linalg.norm(w)
    if x is None:
        x = default_start(n)

    Ax = A @ x
    lam = float(x @ Ax)
    r = Ax - lam * x
    residual = float(np.linalg.norm(r))
    p = None
    iterations = 0

    while residual > threshold and iterations < opts.max_iter:
        iterations += 1
        columns = [x, r / residual]
        if p is not None:
            columns.append(p)
        basis = linalg.orth(np.column_stack(columns), rcond=1e-10)
        T = basis.T @ A @ basis
        _, ritz = linalg.eigh((T + T.T) / 2.0)
        x_new = basis @ ritz[:, 0]
        x_new /= np.linalg.norm(x_new)

        # previous direction: new iterate with its component along the old one removed
        p = x_new - x * float(x @ x_new)
        p_norm = np.linalg.norm(p)
        p = p / p_norm if p_norm > 1e-14 else None

        x = x_new
        Ax = A @ x
        lam = float(x @ Ax)
        r = Ax - lam * x
        residual = float(np.linalg.norm(r))

    converged = residual <= threshold
    if not converged:
        logger.warning(f"Eigensolver stopped at max_iter={opts.max_iter} with residual {residual:.3e}")
    return EigResult(eigenvalue=lam, v=canonical_sign(x), iterations=iterations,
                     residual=residual, converged=converged)


def dense_eig_oracle(M, cap: int = DEFAULT_DENSE_CAP) -> DenseEig:
    """Full spectral decomposition, ascending; columns sign-canonicalized"""
    A = _checked(M)
    if A.shape[0] > cap:
        raise SizeCapError(f"dense eigendecomposition capped at n={cap}, got n={A.shape[0]}")
    values, vectors = linalg.eigh(A)
    for k in range(vectors.shape[1]):
        vectors[:, k] = canonical_sign(vectors[:, k])
    return DenseEig(values=values, vectors=vectors)
