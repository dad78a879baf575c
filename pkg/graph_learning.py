"""Graph construction from features: Mahalanobis edge weights (L1),
nonnegative LLE coefficients (L2) and their conic combination."""
import enum
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.spatial.distance import pdist, squareform

from errors import DimensionError

logger = logging.getLogger(__name__)

LLE_DEFAULT_K = 10


class ParamVariant(enum.Enum):
    Q = "q"
    Q_LLE = "q+lle"


@dataclass(frozen=True)
class MetricFactor:
    """Lower-triangular Q with its sparsity mask; the metric is Q Q^T"""
    Q: np.ndarray
    mask: np.ndarray
    zeta: float = 0.0

    @property
    def metric(self) -> np.ndarray:
        return self.Q @ self.Q.T

    @property
    def n_trainable(self) -> int:
        return int(self.mask.sum())

    def trainable_values(self) -> np.ndarray:
        return self.Q[self.mask].copy()

    def with_values(self, values: np.ndarray) -> "MetricFactor":
        """Replace the masked entries; entries outside the mask stay exactly 0"""
        Q = np.zeros_like(self.Q)
        Q[self.mask] = values
        return replace(self, Q=Q)


@dataclass(frozen=True)
class LLECoeff:
    C: np.ndarray
    eta: float
    gamma: float = 0.0
    mu: float = 0.0


@dataclass(frozen=True)
class GraphParams:
    sigma_d: Optional[float] = None
    alpha1: float = 1.0
    alpha2: float = 1.0
    knn_k: Optional[int] = None

    def __post_init__(self):
        if self.sigma_d is not None and not self.sigma_d > 0:
            raise ValueError(f"sigma_d must be positive, got {self.sigma_d}")
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("alpha1 and alpha2 must be non-negative")
        if self.knn_k is not None and self.knn_k < 1:
            raise ValueError(f"knn_k must be at least 1, got {self.knn_k}")


def _features(F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    if F.ndim != 2:
        raise DimensionError(f"expected an N x K feature matrix, got shape {F.shape}")
    if not np.all(np.isfinite(F)):
        raise ValueError("feature matrix has NaN or Inf entries")
    return F


def empirical_covariance(F) -> np.ndarray:
    """Sample covariance plus a small ridge so that it can be inverted"""
    F = _features(F)
    if F.shape[0] < 2:
        raise ValueError("covariance needs at least two samples")
    K = F.shape[1]
    E = np.atleast_2d(np.cov(F, rowvar=False))
    ridge = max(1e-6 * np.trace(E) / K, 1e-10)
    return E + ridge * np.eye(K)


def cholesky_init(E) -> MetricFactor:
    """Lower-triangular Q with Q Q^T = E^-1"""
    E = np.asarray(E, dtype=float)
    try:
        E_inv = linalg.cho_solve(linalg.cho_factor(E, lower=True), np.eye(E.shape[0]))
        Q = linalg.cholesky((E_inv + E_inv.T) / 2.0, lower=True)
    except linalg.LinAlgError as e:
        raise ValueError(f"covariance is singular even after the ridge: {e}") from e
    return MetricFactor(Q=Q, mask=np.tril(np.ones(Q.shape, dtype=bool)))


def sparsify(Q, zeta: float) -> MetricFactor:
    """Zero off-diagonal entries below zeta times the mean |diagonal|"""
    if zeta < 0:
        raise ValueError(f"zeta must be non-negative, got {zeta}")
    Q = np.tril(np.asarray(Q, dtype=float))
    tau = zeta * np.mean(np.abs(np.diag(Q)))
    mask = np.tril(np.abs(Q) >= tau)
    mask[np.diag_indices(Q.shape[0])] = True
    return MetricFactor(Q=np.where(mask, Q, 0.0), mask=mask, zeta=zeta)


def mahalanobis_distance(f_i, f_j, Q) -> float:
    delta = np.asarray(f_i, dtype=float) - np.asarray(f_j, dtype=float)
    proj = np.asarray(Q, dtype=float).T @ delta
    return float(proj @ proj)


def pairwise_distances(F, Q) -> np.ndarray:
    """All d_ij as an N x N matrix"""
    G = _features(F) @ np.asarray(Q, dtype=float)
    if G.shape[0] < 2:
        return np.zeros((G.shape[0], G.shape[0]))
    return squareform(pdist(G, metric="sqeuclidean"))


def edge_weight(d, sigma_d: float):
    if not sigma_d > 0:
        raise ValueError(f"sigma_d must be positive, got {sigma_d}")
    return np.exp(-np.asarray(d, dtype=float) / sigma_d ** 2)


def default_sigma_d(D: np.ndarray) -> float:
    """Median heuristic: sigma_d^2 = median pairwise distance"""
    upper = D[np.triu_indices(D.shape[0], k=1)]
    median = float(np.median(upper)) if upper.size else 0.0
    return float(np.sqrt(median)) if median > 0 else 1.0


def knn_mask(D: np.ndarray, k: int) -> np.ndarray:
    """Union-symmetrized k-nearest-neighbour pattern, no self-pairs"""
    n = D.shape[0]
    k = min(k, n - 1)
    mask = np.zeros((n, n), dtype=bool)
    if k <= 0:
        return mask
    scores = D.astype(float).copy()
    scores[np.diag_indices(n)] = np.inf
    nearest = np.argsort(scores, axis=1, kind="stable")[:, :k]
    mask[np.repeat(np.arange(n), k), nearest.ravel()] = True
    return mask | mask.T


def combinatorial_laplacian(W: np.ndarray) -> np.ndarray:
    return np.diag(W.sum(axis=1)) - W


def build_L1(F, Q, params: GraphParams = GraphParams()) -> np.ndarray:
    D = pairwise_distances(F, Q)
    sigma_d = params.sigma_d if params.sigma_d is not None else default_sigma_d(D)
    W = edge_weight(D, sigma_d)
    W[np.diag_indices(W.shape[0])] = 0.0
    if params.knn_k is not None:
        W = np.where(knn_mask(D, params.knn_k), W, 0.0)
    return combinatorial_laplacian(W)


def soft_threshold(C, eta: float) -> np.ndarray:
    """T(c) = c - eta if c >= eta else 0"""
    C = np.asarray(C, dtype=float)
    return np.where(C >= eta, C - eta, 0.0)


def project_s_plus(C) -> np.ndarray:
    """Symmetric, zero diagonal, nonnegative"""
    S = (C + C.T) / 2.0
    S[np.diag_indices(S.shape[0])] = 0.0
    return np.maximum(S, 0.0)


def lle_objective(F, C, eta: float) -> float:
    F = np.asarray(F, dtype=float)
    residual = F - C @ F
    return float(np.sum(residual ** 2) + eta * np.abs(C).sum())


def lle_coefficients(F, eta: float, max_iter: int = 1000, step: Optional[float] = None,
                     k: Optional[int] = None, tol: float = 1e-8) -> LLECoeff:
    """Proximal gradient on ||F - C F||^2 + eta ||C||_1 over S+.

    Starts from the unit-weight kNN adjacency and returns the lowest
    objective iterate seen.
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    F = _features(F)
    n = F.shape[0]
    gram = F @ F.T
    if step is None:
        lmax = float(linalg.eigvalsh(gram)[-1]) if n else 0.0
        step = 0.99 / (2.0 * lmax) if lmax > 0 else 1.0

    k = min(LLE_DEFAULT_K, n - 1) if k is None else k
    D = squareform(pdist(F, metric="sqeuclidean")) if n > 1 else np.zeros((n, n))
    C = knn_mask(D, k).astype(float)

    objective = lle_objective(F, C, eta)
    best_C, best_objective = C, objective
    for iteration in range(max_iter):
        grad = 2.0 * (C @ gram - gram)
        C = project_s_plus(soft_threshold(C - step * grad, eta))
        new_objective = lle_objective(F, C, eta)
        if new_objective < best_objective:
            best_C, best_objective = C, new_objective
        if abs(new_objective - objective) <= tol * max(abs(objective), np.finfo(float).tiny):
            break
        objective = new_objective

    logger.debug(f"LLE finished after {iteration + 1 if max_iter else 0} iterations, objective {best_objective:.6g}")
    return LLECoeff(C=best_C, eta=eta)


def adjust_lle(coeff: LLECoeff, labels, gamma: float, mu: float) -> LLECoeff:
    """Raise same-label weights by gamma and lower different-label weights by mu.

    ``labels`` has one entry per sample: +1 / -1 for known labels, 0 otherwise.
    """
    if gamma < 0 or mu < 0:
        raise ValueError("gamma and mu must be non-negative")
    labels = np.asarray(labels, dtype=float)
    C = coeff.C
    if labels.size != C.shape[0]:
        raise DimensionError(f"{labels.size} labels for {C.shape[0]} samples")

    product = np.outer(labels, labels)
    off_diagonal = ~np.eye(C.shape[0], dtype=bool)
    same = (product > 0) & off_diagonal
    different = (product < 0) & off_diagonal

    adjusted = np.where(same, C + gamma, C)
    adjusted = np.where(different, np.maximum(C - mu, 0.0), adjusted)
    return replace(coeff, C=adjusted, gamma=gamma, mu=mu)


def build_L2(C) -> np.ndarray:
    C = C.C if isinstance(C, LLECoeff) else np.asarray(C, dtype=float)
    return combinatorial_laplacian(C)


def combine(L1, L2, alpha1: float, alpha2: float) -> np.ndarray:
    if alpha1 < 0 or alpha2 < 0:
        raise ValueError(f"conic combination needs non-negative weights, got {alpha1}, {alpha2}")
    return alpha1 * np.asarray(L1, dtype=float) + alpha2 * np.asarray(L2, dtype=float)


def param_count(K: int, P: int, variant: ParamVariant) -> int:
    """Upper bound on trainable scalars of a P-layer network"""
    if K < 1 or P < 1:
        raise ValueError("K and P must be at least 1")
    per_layer = K * (K + 1) // 2
    if variant is ParamVariant.Q_LLE:
        per_layer += 4
    return P * per_layer


def trainable_count(metric: MetricFactor, variant: ParamVariant, P: int = 1) -> int:
    return P * (metric.n_trainable + (4 if variant is ParamVariant.Q_LLE else 0))
