from .base_classifier import BaseClassifier, Prediction
from data_io import Dataset, FoldSplit
from sdr_classifier import build_instance, solve_glr_baseline


class GlrClassifier(BaseClassifier):
    """Box-relaxed GLR minimization thresholded by sign"""

    method = "glr"

    def classify(self, dataset: Dataset, split: FoldSplit) -> Prediction:
        F, train, test, labels = self.fold_view(dataset, split)
        instance = build_instance(self.build_laplacian(F, train, labels), train, labels)
        x = solve_glr_baseline(instance)
        return Prediction(test=split.test, labels=x[test])
