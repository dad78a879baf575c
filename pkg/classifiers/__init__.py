from .base_classifier import BaseClassifier, Prediction
from .gdpa_classifier import GdpaClassifier
from .glr_classifier import GlrClassifier
from .unrolled_classifier import UnrolledClassifier

__all__ = ['BaseClassifier', 'Prediction', 'GdpaClassifier', 'GlrClassifier', 'UnrolledClassifier',
           'make_classifier']


def make_classifier(method: str, config, layers=None) -> BaseClassifier:
    """Classifier for a RunReport method name: gdpa, glr or unrolled"""
    if method == "gdpa":
        return GdpaClassifier(config)
    if method == "glr":
        return GlrClassifier(config)
    if method == "unrolled":
        return UnrolledClassifier(config, layers=layers)
    raise ValueError(f"Unknown method: {method}")
