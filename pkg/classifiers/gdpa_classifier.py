from .base_classifier import BaseClassifier, Prediction
from data_io import Dataset, FoldSplit
from sdr_classifier import build_instance, extract_labels, gdpa_solve


class GdpaClassifier(BaseClassifier):
    """SDR classifier solved by GDPA-linearized LPs on the initial graph"""

    method = "gdpa"

    def classify(self, dataset: Dataset, split: FoldSplit) -> Prediction:
        F, train, test, labels = self.fold_view(dataset, split)
        instance = build_instance(self.build_laplacian(F, train, labels), train, labels)
        solution = gdpa_solve(instance, self.config.gdpa)
        x = extract_labels(solution.y, solution.z, instance, self.config.gdpa.eig)
        self.logger.debug(f"Fold {split.fold} seed {split.seed}: {len(solution.trace)} GDPA iterations")
        return Prediction(test=split.test, labels=x[test], outer_iterations=len(solution.trace),
                          eig_iterations=sum(solution.trace.eig_iterations), traces=[solution.trace])
