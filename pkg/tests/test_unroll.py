import json
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from data_io import make_sonar_like
from errors import DataFormatError, DimensionError
from graph_learning import GraphParams, ParamVariant, build_L1
from sdr_classifier import GdpaOptions, build_instance, extract_labels, gdpa_solve
from unroll import (EpochRecord, GradEstimator, LayerParams, NetworkConfig, UnrollSplit, estimate_gradient, flatten,
                    forward, infer, init_layers, load_checkpoint, loss, save_checkpoint, sgd_train, soft_loss,
                    unflatten)

FAST_GDPA = GdpaOptions(max_outer=15)


@pytest.fixture
def cluster_data(two_cluster):
    dataset, labeled = two_cluster(seed=3)
    rest = np.setdiff1d(np.arange(dataset.n_samples), labeled)
    return dataset, labeled, rest


def quick_config(**overrides):
    base = dict(epochs=1, gdpa=FAST_GDPA)
    base.update(overrides)
    return NetworkConfig(**base)


class TestLoss:
    def test_perfect_prediction(self):
        assert loss([1, -1, 1], [1, -1, 1]) == 0.0

    def test_one_wrong_label_costs_four(self):
        assert loss([1, 1, 1], [1, -1, 1]) == 4.0

    def test_all_wrong(self):
        truth = np.array([1, -1, -1, 1, 1])
        assert loss(-truth, truth) == 4.0 * truth.size

    def test_soft_loss_rescales_scores(self):
        assert soft_loss([2.0, -4.0], [1, -1]) == pytest.approx(0.25)
        assert soft_loss([0.0, 0.0], [1, -1]) == pytest.approx(2.0)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            loss([1, 1], [1, 1, 1])


class TestGradient:
    def test_central_difference_on_quadratic(self):
        a = np.array([1.0, -2.0, 0.5])
        b = np.array([0.3, 0.0, -1.0])

        def fn(theta):
            return float(a @ theta ** 2 + b @ theta)

        theta = np.array([0.7, -1.2, 2.0])
        grad = estimate_gradient(fn, theta, GradEstimator.CENTRAL_FD, fd_step=1e-3)
        assert_allclose(grad, 2 * a * theta + b, atol=1e-6)

    def test_failed_probes_are_skipped(self):
        def fn(theta):
            return float("inf") if theta[0] > 1.0 else float(theta @ theta)

        grad = estimate_gradient(fn, np.array([1.0, 2.0]), GradEstimator.CENTRAL_FD, fd_step=1e-2)
        assert grad[0] == 0.0
        assert grad[1] == pytest.approx(4.0)

    def test_spsa_is_exact_for_one_dimensional_linear(self):
        grad = estimate_gradient(lambda t: 3.0 * float(t[0]), np.array([0.5]), GradEstimator.SPSA,
                                 rng=np.random.default_rng(1))
        assert grad[0] == pytest.approx(3.0)

    def test_spsa_failed_probe_gives_zero_step(self):
        grad = estimate_gradient(lambda t: float("inf"), np.zeros(3), GradEstimator.SPSA)
        assert_allclose(grad, 0.0)

    def test_central_difference_error_is_second_order(self):
        def fn(theta):
            return float(np.sin(theta[0]) * np.exp(0.5 * theta[1]) + theta[2] ** 3)

        theta = np.array([0.3, -0.4, 0.7])
        e = np.exp(0.5 * theta[1])
        exact = np.array([np.cos(theta[0]) * e, 0.5 * np.sin(theta[0]) * e, 3.0 * theta[2] ** 2])

        def error(step):
            return np.linalg.norm(estimate_gradient(fn, theta, GradEstimator.CENTRAL_FD, fd_step=step) - exact)

        assert 3.5 < error(1e-2) / error(5e-3) < 4.5
        assert error(1e-4) < 1e-6


class TestConfig:
    @pytest.mark.parametrize("P, expected", [(1, None), (4, 250), (500, 3)])
    def test_layer_iters(self, P, expected):
        assert NetworkConfig(P=P).layer_iters() == expected

    def test_explicit_inner_iters(self):
        assert NetworkConfig(P=2, inner_iters=7).layer_iters() == 7

    @pytest.mark.parametrize("kwargs", [{"P": 0}, {"lr": -1.0}, {"epochs": -1}, {"fd_step": 0.0}, {"workers": 0}])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            NetworkConfig(**kwargs)

    def test_dict_round_trip(self):
        config = NetworkConfig(P=3, grad_estimator=GradEstimator.SPSA, variant=ParamVariant.Q, sigma_d=0.5,
                               gdpa=GdpaOptions(max_outer=12))
        data = json.loads(json.dumps(config.to_dict()))
        assert NetworkConfig.from_dict(data) == config


class TestSplit:
    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            UnrollSplit(unroll_train=[0, 1], unroll_test=[1, 2])

    def test_empty_side_rejected(self):
        with pytest.raises(ValueError):
            UnrollSplit(unroll_train=[], unroll_test=[0])

    def test_covers(self):
        split = UnrollSplit(unroll_train=[0, 2], unroll_test=[1], test=[3])
        split.check_covers(4)
        assert_array_equal(split.training_pool, [0, 1, 2])
        with pytest.raises(ValueError):
            split.check_covers(5)


class TestLayers:
    def test_init_layers(self, cluster_data):
        dataset, _, _ = cluster_data
        layers = init_layers(dataset.F, NetworkConfig(P=3))
        assert len(layers) == 3
        assert all(layer.inner_iters == 333 for layer in layers)
        assert_allclose(layers[0].scalars, [1.0, 1.0, 1.0, 1.0])

    def test_flatten_round_trip(self, cluster_data):
        dataset, _, _ = cluster_data
        layers = init_layers(dataset.F, NetworkConfig(P=2))
        theta = flatten(layers, ParamVariant.Q_LLE)
        assert theta.size == 2 * (layers[0].metric.n_trainable + 4)
        restored = unflatten(theta, layers, ParamVariant.Q_LLE)
        assert_allclose(restored[1].metric.Q, layers[1].metric.Q)

    def test_unflatten_clamps_scalars(self, cluster_data):
        dataset, _, _ = cluster_data
        layers = init_layers(dataset.F, NetworkConfig())
        theta = flatten(layers, ParamVariant.Q_LLE)
        theta[-4:] = [-1.0, 0.5, -0.2, 2.0]
        restored = unflatten(theta, layers, ParamVariant.Q_LLE)[0]
        assert (restored.gamma, restored.mu, restored.alpha1, restored.alpha2) == (0.0, 0.5, 0.0, 2.0)

    def test_unflatten_length_check(self, cluster_data):
        dataset, _, _ = cluster_data
        layers = init_layers(dataset.F, NetworkConfig())
        with pytest.raises(DimensionError):
            unflatten(np.zeros(100), layers, ParamVariant.Q_LLE)

    def test_q_variant_has_no_scalars(self, cluster_data):
        dataset, _, _ = cluster_data
        layers = init_layers(dataset.F, NetworkConfig())
        assert flatten(layers, ParamVariant.Q).size == layers[0].metric.n_trainable


class TestForward:
    def test_single_layer_matches_direct_solve(self, cluster_data):
        dataset, labeled, rest = cluster_data
        config = quick_config(variant=ParamVariant.Q)
        layers = init_layers(dataset.F, config)
        result = forward(layers, dataset.F, labeled, dataset.labels[labeled], config)

        L = build_L1(dataset.F, layers[0].metric.Q, GraphParams())
        instance = build_instance(L, labeled, dataset.labels[labeled])
        solution = gdpa_solve(instance, FAST_GDPA)
        direct = extract_labels(solution.y, solution.z, instance)

        assert_array_equal(result.unlabeled, rest)
        assert_array_equal(result.labels, direct[rest])
        assert result.outer_iterations == len(solution.trace)

    def test_layers_share_one_dual_state(self, cluster_data):
        dataset, labeled, _ = cluster_data
        config = quick_config(P=3, inner_iters=2)
        result = forward(init_layers(dataset.F, config), dataset.F, labeled, dataset.labels[labeled], config)
        assert len(result.traces) == 3
        assert all(len(trace) <= 2 for trace in result.traces)
        assert result.state.t == result.outer_iterations
        assert set(np.unique(result.labels)) <= {-1, 1}

    def test_infer_relearns_lle(self, cluster_data):
        dataset, labeled, rest = cluster_data
        config = quick_config()
        result = infer(init_layers(dataset.F, config), dataset.F, labeled, dataset.labels[labeled], config)
        assert result.scores.shape == rest.shape

    def test_relabelling_samples_permutes_the_output(self, two_cluster):
        config = NetworkConfig(variant=ParamVariant.Q)
        for seed in range(5):
            dataset, labeled = two_cluster(seed, n=12)
            perm = np.random.default_rng(seed).permutation(dataset.n_samples)
            inverse = np.argsort(perm)
            F, labels = dataset.F, dataset.labels[labeled]

            base = forward(init_layers(F, config), F, labeled, labels, config)
            moved = forward(init_layers(F[perm], config), F[perm], inverse[labeled], labels, config)

            assert_array_equal(np.sort(perm[moved.unlabeled]), base.unlabeled)
            by_sample = dict(zip(perm[moved.unlabeled].tolist(), moved.labels.tolist()))
            assert [by_sample[i] for i in base.unlabeled.tolist()] == base.labels.tolist()


class TestTraining:
    def test_zero_learning_rate_keeps_parameters(self, cluster_data):
        dataset, labeled, rest = cluster_data
        config = quick_config(lr=0.0)
        split = UnrollSplit(unroll_train=labeled, unroll_test=rest)
        template = init_layers(dataset.F, config)
        result = sgd_train(dataset.F, dataset.labels, split, config)
        assert_allclose(result.layers[0].metric.Q, template[0].metric.Q)
        assert_allclose(result.layers[0].scalars, template[0].scalars)

    def test_history_has_one_record_per_epoch(self, cluster_data):
        dataset, labeled, rest = cluster_data
        config = quick_config(epochs=2, grad_estimator=GradEstimator.SPSA)
        split = UnrollSplit(unroll_train=labeled, unroll_test=rest)
        result = sgd_train(dataset.F, dataset.labels, split, config)
        assert [r.epoch for r in result.history] == [1, 2]
        assert all(r.hard_loss >= 0 and r.soft_loss >= 0 for r in result.history)
        assert len(result.losses) == 2

    def test_layer_count_mismatch(self, cluster_data):
        dataset, labeled, rest = cluster_data
        config = quick_config(P=2)
        split = UnrollSplit(unroll_train=labeled, unroll_test=rest)
        with pytest.raises(DimensionError):
            sgd_train(dataset.F, dataset.labels, split, config, layers=init_layers(dataset.F, quick_config()))

    def test_split_must_cover_samples(self, cluster_data):
        dataset, labeled, _ = cluster_data
        split = UnrollSplit(unroll_train=labeled, unroll_test=[int(np.setdiff1d(np.arange(10), labeled)[0])])
        with pytest.raises(ValueError):
            sgd_train(dataset.F, dataset.labels, split, quick_config())

    def test_two_layers_train_no_worse_than_one(self):
        wins = 0
        for seed in range(10):
            dataset = make_sonar_like(n=24, k=6, seed=seed)
            pool = np.random.default_rng(seed).permutation(dataset.n_samples)
            split = UnrollSplit(unroll_train=pool[:18], unroll_test=pool[18:])
            mean_loss = {}
            for P in (1, 2):
                config = NetworkConfig(P=P, epochs=3, variant=ParamVariant.Q, zeta=1.0,
                                       grad_estimator=GradEstimator.SPSA, seed=seed, gdpa=GdpaOptions(max_outer=60))
                result = sgd_train(dataset.F, dataset.labels, split, config)
                mean_loss[P] = np.mean(result.losses)
            wins += int(mean_loss[2] <= mean_loss[1])
        assert wins >= 7


class TestCheckpoint:
    def test_round_trip(self, cluster_data, tmp_path):
        dataset, _, _ = cluster_data
        config = NetworkConfig(P=2, zeta=0.5)
        layers = init_layers(dataset.F, config)
        path = save_checkpoint(tmp_path / "nested" / "model.json", layers, config)
        restored, restored_config = load_checkpoint(path)
        assert restored_config == config
        assert len(restored) == 2
        assert_array_equal(restored[0].metric.Q, layers[0].metric.Q)
        assert_array_equal(restored[0].metric.mask, layers[0].metric.mask)
        assert restored[1].inner_iters == layers[1].inner_iters

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(DataFormatError):
            load_checkpoint(path)

    def test_unknown_schema_version(self, tmp_path):
        path = tmp_path / "old.json"
        path.write_text(json.dumps({"schema_version": 99, "layers": [], "config": {}}))
        with pytest.raises(DataFormatError):
            load_checkpoint(path)

    def test_layer_params_defaults(self, cluster_data):
        dataset, _, _ = cluster_data
        layer = LayerParams(metric=init_layers(dataset.F, NetworkConfig())[0].metric)
        assert layer.inner_iters is None

    def test_history_is_strict_json(self, cluster_data, tmp_path):
        dataset, _, _ = cluster_data
        config = NetworkConfig()
        history = [EpochRecord(epoch=1, hard_loss=float("inf"), soft_loss=0.5)]
        path = save_checkpoint(tmp_path / "model.json", init_layers(dataset.F, config), config, history)
        text = path.read_text()
        assert "Infinity" not in text and "NaN" not in text
        assert json.loads(text)["history"] == [{"epoch": 1, "hard_loss": None, "soft_loss": 0.5}]

    def test_non_finite_parameters_are_rejected(self, cluster_data, tmp_path):
        dataset, _, _ = cluster_data
        config = NetworkConfig()
        layer = replace(init_layers(dataset.F, config)[0], gamma=float("nan"))
        with pytest.raises(ValueError):
            save_checkpoint(tmp_path / "model.json", [layer], config)
        assert not (tmp_path / "model.json").exists()
