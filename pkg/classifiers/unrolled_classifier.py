from typing import List, Optional, Sequence

import numpy as np

from .base_classifier import BaseClassifier, Prediction
from data_io import UNROLL_FRACTION, Dataset, FoldSplit, shuffle_cut
from unroll import LayerParams, NetworkConfig, TrainResult, UnrollSplit, infer, sgd_train


class UnrolledClassifier(BaseClassifier):
    """P-layer unrolled network.

    Without fixed layers every split trains its own parameters on the
    75/25 unroll split of its train part before inferring the test labels.
    """

    method = "unrolled"

    def __init__(self, config: NetworkConfig = NetworkConfig(), layers: Optional[Sequence[LayerParams]] = None):
        super().__init__(config)
        self.layers: Optional[List[LayerParams]] = list(layers) if layers is not None else None
        self.last_training: Optional[TrainResult] = None

    @property
    def label(self) -> str:
        return f"unrolled-{self.config.P}"

    def unroll_split(self, split: FoldSplit, train: np.ndarray, test: np.ndarray) -> UnrollSplit:
        """Local-coordinate unroll split of the train positions"""
        position = dict(zip(split.train.tolist(), train.tolist()))
        if split.unroll_train is not None:
            unroll_train = np.array([position[int(i)] for i in split.unroll_train], dtype=int)
            unroll_test = np.array([position[int(i)] for i in split.unroll_test], dtype=int)
        else:
            unroll_train, unroll_test = shuffle_cut(train, UNROLL_FRACTION, split.seed)
        return UnrollSplit(unroll_train=unroll_train, unroll_test=unroll_test, test=test)

    def classify(self, dataset: Dataset, split: FoldSplit) -> Prediction:
        F, train, test, labels = self.fold_view(dataset, split)
        layers = self.layers
        if layers is None:
            truth = np.zeros(F.shape[0], dtype=int)
            truth[train] = labels
            self.last_training = sgd_train(F, truth, self.unroll_split(split, train, test), self.config)
            layers = self.last_training.layers
            self.logger.info(f"Fold {split.fold} seed {split.seed}: trained {len(layers)} layers, "
                             f"final loss {self.last_training.losses[-1] if self.last_training.history else None}")
        result = infer(layers, F, train, labels, self.config)
        position = {int(g): k for k, g in enumerate(result.unlabeled)}
        predicted = np.array([result.labels[position[int(t)]] for t in test], dtype=int)
        return Prediction(test=split.test, labels=predicted, outer_iterations=result.outer_iterations,
                          eig_iterations=result.eig_iterations, traces=result.traces)
