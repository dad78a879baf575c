"""SDR binary graph classifier solved by a sequence of GDPA-linearized LPs.

Indices here are 0-based. After ``build_instance`` the samples are
reordered: ``[0, m1)`` carry label +1, ``[m1, m)`` carry label -1 and
``[m, n)`` are unlabeled. Node ``n`` of H is the extra node; H-bar splits
it into nodes ``n`` (positive edges) and ``n + 1`` (negative edges).

LP variables are ``theta = (y_0 .. y_n, z_0 .. z_{m-1})``.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from eigensolver import EigOptions, dense_eig_oracle, smallest_eigenpair
from errors import DimensionError, LPError, LPInfeasibleError, LPUnboundedError, SignStructureError, SizeCapError
from gershgorin import DEFAULT_ZERO_GUARD, GdpaScaling, gdpa_scaling
from graph import LaplacianKind, SignedGraph, is_balanced, laplacian, laplacian_to_graph, sym_matrix
from linear_program import LinearProgram, solve_lp

logger = logging.getLogger(__name__)

BRUTE_FORCE_CAP = 20
_BRUTE_FORCE_CHUNK = 1 << 14


@dataclass(frozen=True)
class ProblemInstance:
    L: np.ndarray
    labels: np.ndarray
    n: int
    m: int
    m1: int
    order: np.ndarray

    @property
    def x1(self) -> float:
        return float(self.labels[0])

    def to_original(self, values: np.ndarray) -> np.ndarray:
        """Undo the label-block reordering of a length-n vector"""
        out = np.empty_like(values)
        out[self.order] = values
        return out

    @property
    def n_vars(self) -> int:
        return self.n + 1 + self.m


@dataclass
class DualState:
    y: np.ndarray
    z: np.ndarray
    eps: float
    t: int = 0
    warm_v: Optional[np.ndarray] = None
    objective: Optional[float] = None


@dataclass(frozen=True)
class GdpaOptions:
    lp_tol: float = 1e-6
    max_outer: int = 1000
    eig: EigOptions = EigOptions()
    zero_guard: float = DEFAULT_ZERO_GUARD
    warm_start: bool = True
    check_lambda_cap: int = 64
    trust_region: float = 10.0
    debug: bool = False


@dataclass(frozen=True)
class IterationRecord:
    t: int
    objective: float
    lambda_min: Optional[float]
    eig_iterations: int
    eig_residual: float
    lp_status: str
    eps: float
    guarded: int = 0
    trust_region: bool = False


@dataclass
class SolveTrace:
    records: List[IterationRecord] = field(default_factory=list)
    converged: bool = False

    def append(self, record: IterationRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def eig_iterations(self) -> List[int]:
        return [r.eig_iterations for r in self.records]

    def to_records(self) -> List[Dict]:
        """Line-delimited export rows"""
        return [
            {
                "iteration": r.t,
                "objective": r.objective,
                "lambda_min": r.lambda_min,
                "eig_iterations": r.eig_iterations,
                "lp_status": r.lp_status,
                "eps": r.eps,
                "trust_region": r.trust_region,
            }
            for r in self.records
        ]


class GdpaSolution(NamedTuple):
    y: np.ndarray
    z: np.ndarray
    trace: SolveTrace
    state: DualState


def build_instance(L, indices: Sequence[int], labels: Sequence[int]) -> ProblemInstance:
    """Reorder samples into +1 / -1 / unlabeled blocks"""
    L = sym_matrix(L)
    n = L.shape[0]
    indices = [int(i) for i in indices]
    labels = [int(v) for v in labels]

    if not indices:
        raise ValueError("at least one labeled sample is required")
    if len(indices) != len(labels):
        raise DimensionError(f"{len(indices)} indices but {len(labels)} labels")
    if len(set(indices)) != len(indices):
        raise ValueError("labeled indices must be unique")
    if any(not 0 <= i < n for i in indices):
        raise ValueError(f"labeled index out of range for {n} samples")
    if any(v not in (-1, 1) for v in labels):
        raise ValueError("labels must be -1 or +1")

    off = L - np.diag(np.diag(L))
    scale = 1.0 + np.abs(L).max()
    if np.any(off > 1e-12 * scale):
        raise ValueError("L must have nonpositive off-diagonal entries (positive graph)")
    if np.any(L.sum(axis=1) < -1e-10 * scale):
        raise ValueError("L rows must sum to a non-negative value")

    known = dict(zip(indices, labels))
    positive = sorted(i for i, v in known.items() if v == 1)
    negative = sorted(i for i, v in known.items() if v == -1)
    unlabeled = sorted(set(range(n)) - set(known))
    order = np.array(positive + negative + unlabeled, dtype=int)

    return ProblemInstance(
        L=L[np.ix_(order, order)],
        labels=np.array([1.0] * len(positive) + [-1.0] * len(negative)),
        n=n,
        m=len(indices),
        m1=len(positive),
        order=order,
    )


def build_b(instance: ProblemInstance) -> np.ndarray:
    return 2.0 * instance.labels


def _check_dims(y, z, instance: ProblemInstance):
    y = np.asarray(y, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if y.size != instance.n + 1 or z.size != instance.m:
        raise DimensionError(f"expected y of length {instance.n + 1} and z of length {instance.m}, "
                             f"got {y.size} and {z.size}")
    return y, z


def check_sign_structure(z: np.ndarray, instance: ProblemInstance, tol: float = 0.0) -> None:
    m1 = instance.m1
    if np.any(z[:m1] > tol) or np.any(z[m1:] < -tol):
        raise SignStructureError("z must be <= 0 on the +1 block and >= 0 on the -1 block")


def assemble_H(y, z, instance: ProblemInstance) -> np.ndarray:
    """H = sum y_i A_i + sum z_i B_i + [L 0; 0 0]"""
    y, z = _check_dims(y, z, instance)
    n, m = instance.n, instance.m
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = instance.L
    H[np.diag_indices(n + 1)] += y
    H[:m, n] = z
    H[n, :m] = z
    return H


def balanced_graph(y, z, eps: float, instance: ProblemInstance) -> SignedGraph:
    """Split the extra node of H's graph into a positive and a negative node"""
    y, z = _check_dims(y, z, instance)
    check_sign_structure(z, instance)
    n, m1 = instance.n, instance.m1

    g = laplacian_to_graph(assemble_H(y, z, instance))
    edges = [(i, j, w) for i, j, w in g.edges if i < n and j < n]
    for i in range(instance.m):
        if z[i] != 0.0:
            edges.append((i, n if i < m1 else n + 1, -z[i]))

    u = g.self_loops[n]
    loops = tuple(g.self_loops[:n]) + (u / 2.0 - eps, u / 2.0 + eps)
    return SignedGraph(n=n + 2, edges=tuple(edges), self_loops=loops)


def assemble_Hbar(y, z, eps: float, instance: ProblemInstance) -> np.ndarray:
    """Generalized Laplacian of the balanced (n + 2)-node graph"""
    return laplacian(balanced_graph(y, z, eps, instance), LaplacianKind.GENERALIZED)


@dataclass(frozen=True)
class HbarAffine:
    """H-bar as an affine function of theta.

    Diagonal entries are ``const + diag_coef @ theta``; every nonconstant
    off-diagonal entry equals a single variable with a known sign.
    """
    const: np.ndarray
    diag_coef: np.ndarray
    link_rows: np.ndarray
    link_cols: np.ndarray
    link_vars: np.ndarray
    link_signs: np.ndarray

    def evaluate(self, theta: np.ndarray) -> np.ndarray:
        H = self.const.copy()
        H[np.diag_indices(H.shape[0])] += self.diag_coef @ theta
        H[self.link_rows, self.link_cols] = theta[self.link_vars]
        H[self.link_cols, self.link_rows] = theta[self.link_vars]
        return H


def hbar_affine(instance: ProblemInstance, eps: Optional[float] = None) -> HbarAffine:
    """With ``eps`` None the balancing shift is the trailing entry of theta"""
    n, m, m1 = instance.n, instance.m, instance.m1
    size = n + 2
    n_vars = instance.n_vars + (1 if eps is None else 0)

    const = np.zeros((size, size))
    const[:n, :n] = instance.L

    diag_coef = np.zeros((size, n_vars))
    diag_coef[np.arange(n), np.arange(n)] = 1.0
    # u_{n}/2 goes to both split nodes
    diag_coef[n, n] = 0.5
    diag_coef[n + 1, n] = 0.5

    z_vars = n + 1 + np.arange(m)
    in_pos = np.arange(m) < m1
    diag_coef[n, z_vars] = np.where(in_pos, -0.5, 0.5)
    diag_coef[n + 1, z_vars] = np.where(in_pos, 0.5, -0.5)

    if eps is None:
        diag_coef[n, -1] = -1.0
        diag_coef[n + 1, -1] = 1.0
    else:
        const[n, n] = -eps
        const[n + 1, n + 1] = eps

    return HbarAffine(
        const=const,
        diag_coef=diag_coef,
        link_rows=np.arange(m),
        link_cols=np.where(in_pos, n, n + 1),
        link_vars=z_vars,
        link_signs=np.where(in_pos, -1.0, 1.0),
    )


def theta_of(y, z, eps: Optional[float] = None) -> np.ndarray:
    parts = [np.asarray(y, dtype=float).ravel(), np.asarray(z, dtype=float).ravel()]
    if eps is not None:
        parts.append([float(eps)])
    return np.concatenate(parts)


def init_state(instance: ProblemInstance) -> DualState:
    n, m = instance.n, instance.m
    y = np.concatenate([np.ones(m), np.zeros(n - m), [float(m)]])
    z = -instance.labels.copy()
    return DualState(y=y, z=z, eps=epsilon_update(y, z))


def epsilon_update(y, z) -> float:
    return float(np.sum(y) + np.sum(z))


def sign_bounds(instance: ProblemInstance, free_eps: bool = False) -> List:
    bounds = [(None, None)] * (instance.n + 1)
    bounds += [(None, 0.0)] * instance.m1 + [(0.0, None)] * (instance.m - instance.m1)
    if free_eps:
        bounds.append((None, None))
    return bounds


def emit_lp(instance: ProblemInstance, scaling: GdpaScaling, eps: Optional[float] = None) -> LinearProgram:
    """Rows center_i - radius_i >= 0 of S H-bar S^-1, linear in theta.

    A fixed ``eps`` is folded into the constant part. Without one, eps is an
    extra free variable with zero cost, so any point feasible for some eps
    remains feasible.
    """
    s = np.asarray(scaling.s, dtype=float)
    size = instance.n + 2
    if s.size != size:
        raise DimensionError(f"scaling of length {s.size} does not match H-bar of size {size}")
    if np.any(s == 0) or not np.all(np.isfinite(s)):
        raise ValueError("GDPA scaling entries must be finite and nonzero")

    aff = hbar_affine(instance, eps)
    ratio = np.abs(s[:, None] / s[None, :])

    off = aff.const.copy()
    off[np.diag_indices(size)] = 0.0
    const_radius = (ratio * np.abs(off)).sum(axis=1)

    G = aff.diag_coef.copy()
    # |theta_k| = sign_k * theta_k under the z block sign bounds
    np.subtract.at(G, (aff.link_rows, aff.link_vars), ratio[aff.link_rows, aff.link_cols] * aff.link_signs)
    np.subtract.at(G, (aff.link_cols, aff.link_vars), ratio[aff.link_cols, aff.link_rows] * aff.link_signs)
    h = const_radius - np.diag(aff.const)

    free_eps = eps is None
    c = np.concatenate([np.ones(instance.n + 1), build_b(instance), [0.0] if free_eps else []])
    return LinearProgram(c=c, G=G, h=h, bounds=sign_bounds(instance, free_eps))


def _trust_region_bounds(instance: ProblemInstance, state: DualState, factor: float) -> List:
    theta = theta_of(state.y, state.z, state.eps)
    bounds = []
    for (lo, hi), value in zip(sign_bounds(instance, free_eps=True), theta):
        delta = factor * (1.0 + abs(value))
        lo_tr, hi_tr = value - delta, value + delta
        bounds.append((lo_tr if lo is None else max(lo, lo_tr), hi_tr if hi is None else min(hi, hi_tr)))
    return bounds


def gdpa_iterate(instance: ProblemInstance, state: DualState, n_iter: int,
                 opts: GdpaOptions = GdpaOptions(), trace: Optional[SolveTrace] = None) -> SolveTrace:
    """Run up to n_iter GDPA-linearized LP iterations, updating state in place.

    The LP picks eps together with (y, z), so the previous iterate is always
    a feasible point of the next LP once its H-bar is PSD.
    """
    trace = trace if trace is not None else SolveTrace()
    size = instance.n + 2
    n1, m = instance.n + 1, instance.m
    aff = hbar_affine(instance)

    for _ in range(n_iter):
        hbar = aff.evaluate(theta_of(state.y, state.z, state.eps))
        if opts.debug:
            balanced, _ = is_balanced(laplacian_to_graph(hbar))
            if not balanced:
                logger.error(f"H-bar graph is not balanced at iteration {state.t + 1}")

        warm = state.warm_v if opts.warm_start else None
        eig = smallest_eigenpair(hbar, opts.eig.with_warm_start(warm))
        state.warm_v = eig.v
        scaling = gdpa_scaling(eig.v, opts.zero_guard, eig.eigenvalue)

        lp = emit_lp(instance, scaling)
        used_trust_region = False
        try:
            solution = solve_lp(lp)
        except (LPUnboundedError, LPInfeasibleError) as e:
            logger.warning(f"{e}; retrying iteration {state.t + 1} inside a trust region")
            used_trust_region = True
            solution = solve_lp(lp.with_bounds(_trust_region_bounds(instance, state, opts.trust_region)))

        lambda_min = None
        if size <= opts.check_lambda_cap:
            lambda_min = float(dense_eig_oracle(aff.evaluate(solution.x), cap=opts.check_lambda_cap).values[0])

        previous = state.objective
        state.y = solution.x[:n1]
        state.z = solution.x[n1:n1 + m]
        state.eps = float(solution.x[-1])
        state.t += 1
        state.objective = solution.objective

        trace.append(IterationRecord(
            t=state.t, objective=solution.objective, lambda_min=lambda_min,
            eig_iterations=eig.iterations, eig_residual=eig.residual,
            lp_status="optimal", eps=state.eps, guarded=scaling.guarded,
            trust_region=used_trust_region,
        ))
        logger.debug(f"GDPA iteration {state.t}: objective={solution.objective:.8g} "
                     f"lambda_min={lambda_min} eig_iterations={eig.iterations}")

        if previous is not None and abs(solution.objective - previous) <= opts.lp_tol * (1.0 + abs(solution.objective)):
            trace.converged = True
            break

    return trace


def gdpa_solve(instance: ProblemInstance, opts: GdpaOptions = GdpaOptions()) -> GdpaSolution:
    state = init_state(instance)
    try:
        trace = gdpa_iterate(instance, state, opts.max_outer, opts)
    except LPError as e:
        logger.error(f"GDPA solve aborted at iteration {state.t + 1}: {e}")
        raise
    logger.info(f"GDPA solve finished after {state.t} iterations "
                f"(converged={trace.converged}, objective={state.objective})")
    return GdpaSolution(y=state.y, z=state.z, trace=trace, state=state)


def first_eigenvector(M: np.ndarray, eig: EigOptions = EigOptions()) -> np.ndarray:
    """Exact first eigenvector at small sizes, LOBPCG above the dense cap"""
    if M.shape[0] <= eig.dense_cap:
        return dense_eig_oracle(M, cap=eig.dense_cap).vectors[:, 0]
    return smallest_eigenpair(M, eig).v


def label_scores(y, z, instance: ProblemInstance, eig: EigOptions = EigOptions()) -> np.ndarray:
    """x1 * v_1 * v over the first n entries of H's first eigenvector (reordered)"""
    v = first_eigenvector(assemble_H(y, z, instance), eig)
    return instance.x1 * v[0] * v[: instance.n]


def to_labels(scores: np.ndarray) -> np.ndarray:
    """Sign with ties mapped to +1"""
    return np.where(np.asarray(scores) < 0, -1, 1)


def extract_labels(y, z, instance: ProblemInstance, eig: EigOptions = EigOptions()) -> np.ndarray:
    return instance.to_original(to_labels(label_scores(y, z, instance, eig)))


def primal_objective(x, instance: ProblemInstance) -> float:
    """x^T L x for labels given in original sample order"""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != instance.n:
        raise DimensionError(f"expected {instance.n} labels, got {x.size}")
    x = x[instance.order]
    return float(x @ instance.L @ x)


def solve_glr_baseline(instance: ProblemInstance, tol: float = 1e-8, max_iter: int = 100000) -> np.ndarray:
    """Box-constrained GLR minimization by projected gradient"""
    L, m = instance.L, instance.m
    x = np.zeros(instance.n)
    x[:m] = instance.labels
    norm = np.linalg.norm(L, "fro")
    if norm == 0:
        return instance.to_original(to_labels(x))

    step = 1.0 / (2.0 * norm)
    for _ in range(max_iter):
        x_new = np.clip(x - step * 2.0 * (L @ x), -1.0, 1.0)
        x_new[:m] = instance.labels
        change = np.linalg.norm(x_new - x) / max(np.linalg.norm(x_new), np.finfo(float).tiny)
        x = x_new
        if change <= tol:
            break
    return instance.to_original(to_labels(x))


def brute_force_oracle(instance: ProblemInstance, cap: int = BRUTE_FORCE_CAP) -> np.ndarray:
    """Exhaustive GLR minimizer over binary completions.

    Completions are visited in lexicographic order (-1 before +1, unlabeled
    samples in original index order) and the first minimizer wins.
    """
    n, m = instance.n, instance.m
    free = n - m
    if free > cap:
        raise SizeCapError(f"brute force capped at {cap} unlabeled samples, got {free}")
    labels = instance.labels
    L = instance.L
    if free == 0:
        return instance.to_original(labels.astype(int))

    L_ll, L_lu, L_uu = L[:m, :m], L[:m, m:], L[m:, m:]
    base = float(labels @ L_ll @ labels)
    linear = 2.0 * (labels @ L_lu)
    shifts = np.arange(free - 1, -1, -1)

    best_cost, best = np.inf, None
    for start in range(0, 1 << free, _BRUTE_FORCE_CHUNK):
        codes = np.arange(start, min(start + _BRUTE_FORCE_CHUNK, 1 << free))
        X = np.where((codes[:, None] >> shifts) & 1, 1.0, -1.0)
        costs = base + X @ linear + np.einsum("ij,jk,ik->i", X, L_uu, X)
        # earlier completions win ties up to rounding
        chunk_min = costs.min()
        k = int(np.flatnonzero(costs <= chunk_min + 1e-12 * (1.0 + abs(chunk_min)))[0])
        if best is None or costs[k] < best_cost - 1e-12 * (1.0 + abs(best_cost)):
            best_cost, best = float(costs[k]), X[k]
    x = np.concatenate([labels, best]).astype(int)
    return instance.to_original(x)
