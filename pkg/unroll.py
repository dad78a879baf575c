"""P-layer unrolled network: per-layer graph learning followed by a slice of
GDPA iterations, trained by SGD on black-box gradient estimates."""
import enum
import json
import logging
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from eigensolver import EigOptions
from errors import DataFormatError, DimensionError, GdpaSdrError
from graph_learning import (GraphParams, LLECoeff, MetricFactor, ParamVariant, adjust_lle, build_L1,
                            build_L2, cholesky_init, combine, empirical_covariance, lle_coefficients,
                            sparsify)
from sdr_classifier import (DualState, GdpaOptions, ProblemInstance, SolveTrace, build_instance,
                            gdpa_iterate, init_state, label_scores, to_labels)

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA_VERSION = 1
N_SCALARS = 4


class GradEstimator(enum.Enum):
    CENTRAL_FD = "fd"
    SPSA = "spsa"


@dataclass(frozen=True)
class LayerParams:
    metric: MetricFactor
    gamma: float = 1.0
    mu: float = 1.0
    alpha1: float = 1.0
    alpha2: float = 1.0
    inner_iters: Optional[int] = None

    def clamped(self) -> "LayerParams":
        return replace(self, gamma=max(self.gamma, 0.0), mu=max(self.mu, 0.0),
                       alpha1=max(self.alpha1, 0.0), alpha2=max(self.alpha2, 0.0))

    @property
    def scalars(self) -> np.ndarray:
        return np.array([self.gamma, self.mu, self.alpha1, self.alpha2])


@dataclass(frozen=True)
class NetworkConfig:
    P: int = 1
    lr: float = 1e-2
    epochs: int = 20
    grad_estimator: GradEstimator = GradEstimator.CENTRAL_FD
    fd_step: float = 1e-3
    seed: int = 0
    soft_loss: bool = True
    inner_iters: Optional[int] = None
    variant: ParamVariant = ParamVariant.Q_LLE
    zeta: float = 0.9
    eta: float = 0.01
    gamma: float = 1.0
    mu: float = 1.0
    alpha1: float = 1.0
    alpha2: float = 1.0
    sigma_d: Optional[float] = None
    knn_k: Optional[int] = None
    workers: int = 1
    gdpa: GdpaOptions = GdpaOptions()

    def __post_init__(self):
        if self.P < 1:
            raise ValueError(f"P must be at least 1, got {self.P}")
        if self.lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {self.lr}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if not self.fd_step > 0:
            raise ValueError(f"fd_step must be positive, got {self.fd_step}")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")

    def layer_iters(self) -> Optional[int]:
        """GDPA iterations per layer; None runs a layer to convergence"""
        if self.inner_iters is not None:
            return self.inner_iters
        return None if self.P == 1 else max(3, 1000 // self.P)

    @property
    def graph_params(self) -> GraphParams:
        return GraphParams(sigma_d=self.sigma_d, alpha1=self.alpha1, alpha2=self.alpha2, knn_k=self.knn_k)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["grad_estimator"] = self.grad_estimator.value
        data["variant"] = self.variant.value
        gdpa = data.pop("gdpa")
        gdpa["eig"].pop("warm_start", None)
        data["gdpa"] = gdpa
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "NetworkConfig":
        data = dict(data)
        gdpa = dict(data.pop("gdpa", {}))
        eig = EigOptions(**gdpa.pop("eig", {}))
        return cls(
            grad_estimator=GradEstimator(data.pop("grad_estimator", GradEstimator.CENTRAL_FD.value)),
            variant=ParamVariant(data.pop("variant", ParamVariant.Q_LLE.value)),
            gdpa=GdpaOptions(eig=eig, **gdpa),
            **data,
        )


@dataclass(frozen=True)
class UnrollSplit:
    """Index sets into one training pool.

    unroll_train labels are visible to the network, unroll_test labels only
    enter the loss, test samples are held out of training entirely.
    """
    unroll_train: np.ndarray
    unroll_test: np.ndarray
    test: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    def __post_init__(self):
        parts = [np.asarray(p, dtype=int).ravel() for p in (self.unroll_train, self.unroll_test, self.test)]
        joined = np.concatenate(parts)
        if np.unique(joined).size != joined.size:
            raise ValueError("unroll split index sets must be disjoint")
        if parts[0].size == 0 or parts[1].size == 0:
            raise ValueError("unroll_train and unroll_test must be non-empty")
        object.__setattr__(self, "unroll_train", parts[0])
        object.__setattr__(self, "unroll_test", parts[1])
        object.__setattr__(self, "test", parts[2])

    def check_covers(self, n: int) -> None:
        joined = np.sort(np.concatenate([self.unroll_train, self.unroll_test, self.test]))
        if not np.array_equal(joined, np.arange(n)):
            raise ValueError(f"unroll split does not cover the {n} samples exactly once")

    @property
    def training_pool(self) -> np.ndarray:
        return np.sort(np.concatenate([self.unroll_train, self.unroll_test]))


@dataclass
class ForwardResult:
    """Outputs for the unlabeled samples, in ascending index order"""
    unlabeled: np.ndarray
    scores: np.ndarray
    labels: np.ndarray
    state: DualState
    traces: List[SolveTrace]

    @property
    def outer_iterations(self) -> int:
        return sum(len(t) for t in self.traces)

    @property
    def eig_iterations(self) -> int:
        return sum(sum(t.eig_iterations) for t in self.traces)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    hard_loss: float
    soft_loss: float


@dataclass
class TrainResult:
    layers: List[LayerParams]
    history: List[EpochRecord]
    config: NetworkConfig

    @property
    def losses(self) -> List[float]:
        return [r.hard_loss for r in self.history]


def init_layers(F, config: NetworkConfig) -> List[LayerParams]:
    """Every layer starts from the sparsified Cholesky factor of the inverse covariance"""
    metric = sparsify(cholesky_init(empirical_covariance(F)).Q, config.zeta)
    layer = LayerParams(metric=metric, gamma=config.gamma, mu=config.mu, alpha1=config.alpha1,
                        alpha2=config.alpha2, inner_iters=config.layer_iters())
    return [layer] * config.P


def layer_laplacian(layer: LayerParams, F, labels_full: np.ndarray, coeff: Optional[LLECoeff],
                    config: NetworkConfig) -> np.ndarray:
    L1 = build_L1(F, layer.metric.Q, config.graph_params)
    if config.variant is ParamVariant.Q or coeff is None:
        return L1
    L2 = build_L2(adjust_lle(coeff, labels_full, layer.gamma, layer.mu))
    return combine(L1, L2, layer.alpha1, layer.alpha2)


def forward(layers: Sequence[LayerParams], F, indices: Sequence[int], labels: Sequence[int],
            config: NetworkConfig = NetworkConfig(), coeff: Optional[LLECoeff] = None) -> ForwardResult:
    """Thread one DualState through every layer, then read labels off H"""
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    indices = np.asarray(indices, dtype=int)
    labels_full = np.zeros(n)
    labels_full[indices] = labels
    if coeff is None and config.variant is ParamVariant.Q_LLE:
        coeff = lle_coefficients(F, config.eta)

    state: Optional[DualState] = None
    instance: Optional[ProblemInstance] = None
    traces = []
    for depth, layer in enumerate(layers):
        L = layer_laplacian(layer, F, labels_full, coeff, config)
        instance = build_instance(L, indices, labels)
        if state is None:
            state = init_state(instance)
        n_iter = layer.inner_iters if layer.inner_iters is not None else config.gdpa.max_outer
        traces.append(gdpa_iterate(instance, state, n_iter, config.gdpa))
        logger.debug(f"Layer {depth + 1}/{len(layers)} ran {len(traces[-1])} GDPA iterations")

    scores = instance.to_original(label_scores(state.y, state.z, instance, config.gdpa.eig))
    unlabeled = np.setdiff1d(np.arange(n), indices)
    return ForwardResult(unlabeled=unlabeled, scores=scores[unlabeled], labels=to_labels(scores[unlabeled]),
                         state=state, traces=traces)


def loss(hard_labels, truth) -> float:
    """Squared error between +-1 vectors; each wrong label adds 4"""
    hard_labels = np.asarray(hard_labels, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if hard_labels.shape != truth.shape:
        raise DimensionError(f"{hard_labels.shape} predictions for {truth.shape} labels")
    return float(np.sum((hard_labels - truth) ** 2))


def soft_loss(scores, truth) -> float:
    """Squared error on scores rescaled to unit max-abs"""
    scores = np.asarray(scores, dtype=float)
    peak = np.abs(scores).max() if scores.size else 0.0
    if peak > 0:
        scores = scores / peak
    return loss(scores, truth)


def flatten(layers: Sequence[LayerParams], variant: ParamVariant) -> np.ndarray:
    chunks = []
    for layer in layers:
        chunks.append(layer.metric.trainable_values())
        if variant is ParamVariant.Q_LLE:
            chunks.append(layer.scalars)
    return np.concatenate(chunks)


def unflatten(theta: np.ndarray, template: Sequence[LayerParams], variant: ParamVariant) -> List[LayerParams]:
    """Write theta back into copies of the template layers, clamped"""
    theta = np.asarray(theta, dtype=float)
    layers, pos = [], 0
    for layer in template:
        k = layer.metric.n_trainable
        metric = layer.metric.with_values(theta[pos:pos + k])
        pos += k
        updated = replace(layer, metric=metric)
        if variant is ParamVariant.Q_LLE:
            gamma, mu, alpha1, alpha2 = theta[pos:pos + N_SCALARS]
            pos += N_SCALARS
            updated = replace(updated, gamma=float(gamma), mu=float(mu), alpha1=float(alpha1), alpha2=float(alpha2))
        layers.append(updated.clamped())
    if pos != theta.size:
        raise DimensionError(f"parameter vector of length {theta.size}, layers need {pos}")
    return layers


def _probe_map(fn: Callable[[np.ndarray], float], points: List[np.ndarray],
               executor: Optional[Executor]) -> np.ndarray:
    if executor is None:
        return np.array([fn(p) for p in points])
    return np.array(list(executor.map(fn, points)))


def estimate_gradient(fn: Callable[[np.ndarray], float], theta, estimator: GradEstimator = GradEstimator.CENTRAL_FD,
                      fd_step: float = 1e-3, rng: Optional[np.random.Generator] = None,
                      executor: Optional[Executor] = None) -> np.ndarray:
    """Black-box gradient of a scalar function.

    Steps are relative: h_k = fd_step * (1 + |theta_k|). Probes returning
    +inf contribute nothing to the estimate.
    """
    theta = np.asarray(theta, dtype=float)
    h = fd_step * (1.0 + np.abs(theta))
    grad = np.zeros_like(theta)

    if estimator is GradEstimator.CENTRAL_FD:
        steps = np.diag(h)
        values = _probe_map(fn, [theta + d for d in steps] + [theta - d for d in steps], executor)
        plus, minus = values[: theta.size], values[theta.size:]
        ok = np.isfinite(plus) & np.isfinite(minus)
        grad[ok] = (plus[ok] - minus[ok]) / (2.0 * h[ok])
        if not ok.all():
            logger.warning(f"Skipped {int((~ok).sum())} gradient coordinates after failed probes")
        return grad

    rng = rng if rng is not None else np.random.default_rng(0)
    delta = rng.choice([-1.0, 1.0], size=theta.size)
    plus, minus = _probe_map(fn, [theta + h * delta, theta - h * delta], executor)
    if not (np.isfinite(plus) and np.isfinite(minus)):
        logger.warning("Skipped SPSA step after a failed probe")
        return grad
    return (plus - minus) / (2.0 * h * delta)


class _Objective:
    """Loss of the network on the unroll-test samples as a function of theta"""

    def __init__(self, F, labels, split: UnrollSplit, template: Sequence[LayerParams], config: NetworkConfig):
        pool = split.training_pool
        self.F = np.asarray(F, dtype=float)[pool]
        position = {int(g): k for k, g in enumerate(pool)}
        self.indices = np.array([position[int(i)] for i in split.unroll_train])
        labels = np.asarray(labels, dtype=int)
        self.labels = labels[split.unroll_train]
        # forward reports unlabeled samples in ascending local order
        self.truth = labels[pool][np.setdiff1d(np.arange(pool.size), self.indices)]
        self.template = list(template)
        self.config = config
        self.coeff = lle_coefficients(self.F, config.eta) if config.variant is ParamVariant.Q_LLE else None

    def run(self, theta) -> ForwardResult:
        layers = unflatten(theta, self.template, self.config.variant)
        return forward(layers, self.F, self.indices, self.labels, self.config, self.coeff)

    def losses(self, theta) -> Tuple[float, float]:
        try:
            result = self.run(theta)
        except (GdpaSdrError, np.linalg.LinAlgError) as e:
            logger.warning(f"Forward pass failed: {e}")
            return float("inf"), float("inf")
        return loss(result.labels, self.truth), soft_loss(result.scores, self.truth)

    def __call__(self, theta) -> float:
        hard, soft = self.losses(theta)
        return soft if self.config.soft_loss else hard


def sgd_train(F, labels, split: UnrollSplit, config: NetworkConfig = NetworkConfig(),
              layers: Optional[Sequence[LayerParams]] = None) -> TrainResult:
    """Plain SGD over masked Q entries and the per-layer scalars.

    ``labels`` holds the ground truth for every sample in F.
    """
    F = np.asarray(F, dtype=float)
    split.check_covers(F.shape[0])
    template = list(layers) if layers is not None else init_layers(F, config)
    if len(template) != config.P:
        raise DimensionError(f"{len(template)} layers given for a {config.P}-layer network")

    objective = _Objective(F, labels, split, template, config)
    theta = flatten(template, config.variant)
    rng = np.random.default_rng(config.seed)
    history: List[EpochRecord] = []

    executor = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        for epoch in range(1, config.epochs + 1):
            grad = estimate_gradient(objective, theta, config.grad_estimator, config.fd_step, rng, executor)
            theta = flatten(unflatten(theta - config.lr * grad, template, config.variant), config.variant)
            hard, soft = objective.losses(theta)
            history.append(EpochRecord(epoch=epoch, hard_loss=hard, soft_loss=soft))
            logger.info(f"Epoch {epoch}/{config.epochs}: loss={hard:.4g} soft_loss={soft:.4g} "
                        f"|grad|={np.linalg.norm(grad):.3e}")
    finally:
        if executor is not None:
            executor.shutdown()

    return TrainResult(layers=unflatten(theta, template, config.variant), history=history, config=config)


def infer(layers: Sequence[LayerParams], F, indices: Sequence[int], labels: Sequence[int],
          config: NetworkConfig = NetworkConfig()) -> ForwardResult:
    """Fixed-parameter pass; the LLE coefficients are relearned from F"""
    F = np.asarray(F, dtype=float)
    coeff = lle_coefficients(F, config.eta) if config.variant is ParamVariant.Q_LLE else None
    return forward(layers, F, indices, labels, config, coeff)


def _layer_to_dict(layer: LayerParams) -> Dict:
    return {
        "Q": layer.metric.Q.tolist(),
        "mask": layer.metric.mask.tolist(),
        "zeta": layer.metric.zeta,
        "gamma": layer.gamma,
        "mu": layer.mu,
        "alpha1": layer.alpha1,
        "alpha2": layer.alpha2,
        "inner_iters": layer.inner_iters,
    }


def _layer_from_dict(data: Dict) -> LayerParams:
    metric = MetricFactor(Q=np.array(data["Q"], dtype=float), mask=np.array(data["mask"], dtype=bool),
                          zeta=float(data["zeta"]))
    return LayerParams(metric=metric, gamma=float(data["gamma"]), mu=float(data["mu"]),
                       alpha1=float(data["alpha1"]), alpha2=float(data["alpha2"]),
                       inner_iters=data.get("inner_iters"))


def finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def save_checkpoint(path, layers: Sequence[LayerParams], config: NetworkConfig,
                    history: Sequence[EpochRecord] = ()) -> Path:
    """Write layers as strict JSON; failed epoch losses are stored as null"""
    for depth, layer in enumerate(layers):
        if not (np.all(np.isfinite(layer.metric.Q)) and np.all(np.isfinite(layer.scalars))):
            raise ValueError(f"layer {depth + 1} has non-finite parameters")
    # json writes floats with repr, which round-trips exactly
    record = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "config": config.to_dict(),
        "layers": [_layer_to_dict(layer) for layer in layers],
        "history": [{"epoch": r.epoch, "hard_loss": finite_or_none(r.hard_loss),
                     "soft_loss": finite_or_none(r.soft_loss)} for r in history],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2, sort_keys=True, allow_nan=False))
    logger.info(f"Checkpoint with {len(layers)} layers written to {path}")
    return path


def load_checkpoint(path) -> Tuple[List[LayerParams], NetworkConfig]:
    try:
        record = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise DataFormatError(f"checkpoint {path} is not valid JSON: {e.msg}", line=e.lineno) from e
    version = record.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise DataFormatError(f"unsupported checkpoint schema_version {version!r}")
    layers = [_layer_from_dict(d) for d in record["layers"]]
    return layers, NetworkConfig.from_dict(record["config"])
