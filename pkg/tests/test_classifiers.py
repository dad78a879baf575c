import numpy as np
import pytest
from numpy.testing import assert_array_equal

from classifiers import GdpaClassifier, GlrClassifier, Prediction, UnrolledClassifier, make_classifier
from data_io import FoldSplit, make_splits, make_two_cluster
from graph_learning import ParamVariant
from sdr_classifier import GdpaOptions
from unroll import NetworkConfig, init_layers

FAST = NetworkConfig(epochs=1, gdpa=GdpaOptions(max_outer=15))


@pytest.fixture
def clusters():
    dataset, _ = make_two_cluster(n=20, m=4, seed=1)
    return dataset


@pytest.fixture
def split():
    return FoldSplit(fold=0, seed=1, train=np.array([0, 2, 3, 5, 7, 8, 11, 13, 14, 16, 18, 19]),
                     test=np.array([1, 4, 9, 12]))


def test_make_classifier():
    assert isinstance(make_classifier("gdpa", FAST), GdpaClassifier)
    assert isinstance(make_classifier("glr", FAST), GlrClassifier)
    assert isinstance(make_classifier("unrolled", FAST), UnrolledClassifier)
    with pytest.raises(ValueError):
        make_classifier("svm", FAST)


def test_prediction_error_rate():
    prediction = Prediction(test=np.arange(4), labels=np.array([1, -1, 1, 1]))
    assert prediction.error_rate([1, -1, -1, -1]) == 0.5
    with pytest.raises(ValueError):
        prediction.error_rate([1, 1])
    assert Prediction(test=np.array([]), labels=np.array([])).error_rate([]) == 0.0


def test_fold_view_uses_only_split_members(clusters, split):
    F, train, test, labels = GlrClassifier(FAST).fold_view(clusters, split)
    members = np.sort(np.concatenate([split.train, split.test]))
    assert F.shape == (16, 2)
    assert_array_equal(members[train], split.train)
    assert_array_equal(members[test], split.test)
    assert_array_equal(labels, clusters.labels[split.train])


def test_glr_on_separated_clusters(clusters, split):
    prediction = GlrClassifier(NetworkConfig(variant=ParamVariant.Q)).classify(clusters, split)
    assert_array_equal(prediction.test, split.test)
    assert prediction.error_rate(clusters.labels[split.test]) <= 0.25


def test_gdpa_reports_iterations(clusters, split):
    prediction = GdpaClassifier(FAST).classify(clusters, split)
    assert prediction.labels.shape == split.test.shape
    assert set(np.unique(prediction.labels)) <= {-1, 1}
    assert 1 <= prediction.outer_iterations <= 15
    assert prediction.eig_iterations >= 0


def test_unrolled_with_fixed_layers_skips_training(clusters, split):
    layers = init_layers(clusters.F[np.sort(np.concatenate([split.train, split.test]))], FAST)
    classifier = UnrolledClassifier(FAST, layers=layers)
    prediction = classifier.classify(clusters, split)
    assert classifier.last_training is None
    assert prediction.labels.shape == split.test.shape


def test_unrolled_trains_per_split(clusters, split):
    classifier = UnrolledClassifier(FAST)
    prediction = classifier.classify(clusters, split)
    assert classifier.last_training is not None
    assert len(classifier.last_training.history) == 1
    assert prediction.labels.shape == split.test.shape


def test_unroll_split_falls_back_to_a_seeded_cut(split):
    classifier = UnrolledClassifier(NetworkConfig(P=2))
    assert classifier.label == "unrolled-2"
    train = np.arange(12)
    unroll = classifier.unroll_split(split, train, np.arange(12, 16))
    assert (unroll.unroll_train.size, unroll.unroll_test.size) == (9, 3)
    unroll.check_covers(16)


def test_unroll_split_uses_planned_indices():
    plan = make_splits(make_two_cluster(n=40)[0], 2, split_seeds=(3,), unroll_fraction=0.75)
    planned = plan.splits[0]
    members = np.sort(np.concatenate([planned.train, planned.test]))
    position = {int(g): k for k, g in enumerate(members)}
    train = np.array([position[int(i)] for i in planned.train])
    test = np.array([position[int(i)] for i in planned.test])
    unroll = UnrolledClassifier().unroll_split(planned, train, test)
    assert_array_equal(members[unroll.unroll_train], planned.unroll_train)
    assert_array_equal(members[unroll.unroll_test], planned.unroll_test)
