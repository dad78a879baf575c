from abc import ABC, abstractmethod
from dataclasses import dataclass, field
import logging
from typing import List, Sequence, Tuple

import numpy as np

from data_io import Dataset, FoldSplit
from unroll import NetworkConfig, init_layers, layer_laplacian
from graph_learning import ParamVariant, lle_coefficients
from sdr_classifier import SolveTrace


@dataclass
class Prediction:
    """Predicted labels for the test samples of one fold split"""
    test: np.ndarray
    labels: np.ndarray
    outer_iterations: int = 0
    eig_iterations: int = 0
    traces: List[SolveTrace] = field(default_factory=list)

    def error_rate(self, truth: Sequence[int]) -> float:
        truth = np.asarray(truth)
        if truth.shape != self.labels.shape:
            raise ValueError(f"{self.labels.size} predictions for {truth.size} labels")
        if truth.size == 0:
            return 0.0
        return float(np.mean(self.labels != truth))


class BaseClassifier(ABC):
    """Base class for all semi-supervised classifiers"""

    method = "base"

    def __init__(self, config: NetworkConfig = NetworkConfig()):
        self.logger = logging.getLogger(self.__class__.__name__)
        self.config = config

    @abstractmethod
    def classify(self, dataset: Dataset, split: FoldSplit) -> Prediction:
        """Predict the test labels of one split; train labels are visible"""
        pass

    def fold_view(self, dataset: Dataset, split: FoldSplit) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Features of the split's samples plus local train/test positions and train labels"""
        members = np.sort(np.concatenate([split.train, split.test]))
        position = {int(g): k for k, g in enumerate(members)}
        train_local = np.array([position[int(i)] for i in split.train], dtype=int)
        test_local = np.array([position[int(i)] for i in split.test], dtype=int)
        return dataset.F[members], train_local, test_local, dataset.labels[split.train]

    def build_laplacian(self, F: np.ndarray, indices: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Graph from the initial (untrained) metric and LLE parameters"""
        layer = init_layers(F, self.config)[0]
        labels_full = np.zeros(F.shape[0])
        labels_full[indices] = labels
        coeff = lle_coefficients(F, self.config.eta) if self.config.variant is ParamVariant.Q_LLE else None
        return layer_laplacian(layer, F, labels_full, coeff, self.config)
