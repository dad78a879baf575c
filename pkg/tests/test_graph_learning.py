import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from errors import DimensionError
from graph_learning import (GraphParams, LLECoeff, ParamVariant, adjust_lle, build_L1, build_L2, cholesky_init,
                            combine, default_sigma_d, edge_weight, empirical_covariance, knn_mask, lle_coefficients,
                            lle_objective, mahalanobis_distance, pairwise_distances, param_count, project_s_plus,
                            soft_threshold, sparsify, trainable_count)


@pytest.fixture
def features():
    return np.random.default_rng(0).standard_normal((12, 4))


class TestMetric:
    def test_identity_covariance(self):
        assert_allclose(cholesky_init(np.eye(3)).Q, np.eye(3))

    def test_diagonal_covariance(self):
        assert_allclose(cholesky_init(np.diag([4.0, 1.0])).Q, np.diag([0.5, 1.0]))

    def test_factor_reproduces_inverse_covariance(self, features):
        E = empirical_covariance(features)
        metric = cholesky_init(E)
        assert_allclose(metric.metric, np.linalg.inv(E), rtol=1e-8, atol=1e-10)
        assert_allclose(metric.Q, np.tril(metric.Q))

    def test_constant_features_still_invertible(self):
        E = empirical_covariance(np.ones((5, 2)))
        assert np.all(np.linalg.eigvalsh(E) > 0)
        assert np.all(np.isfinite(cholesky_init(E).Q))

    def test_covariance_needs_two_samples(self):
        with pytest.raises(ValueError):
            empirical_covariance(np.ones((1, 3)))

    def test_sparsify_drops_small_off_diagonal(self):
        metric = sparsify(np.array([[1.0, 0.0], [0.05, 1.0]]), 0.9)
        assert_allclose(metric.Q, np.eye(2))
        assert_array_equal(metric.mask, np.eye(2, dtype=bool))
        assert metric.n_trainable == 2

    def test_sparsify_keeps_large_off_diagonal(self):
        metric = sparsify(np.array([[1.0, 0.0], [0.95, 1.0]]), 0.9)
        assert metric.Q[1, 0] == pytest.approx(0.95)
        assert metric.n_trainable == 3

    def test_zeta_zero_keeps_lower_triangle(self, features):
        metric = sparsify(cholesky_init(empirical_covariance(features)).Q, 0.0)
        assert metric.n_trainable == 10

    def test_with_values_respects_mask(self):
        metric = sparsify(np.array([[1.0, 0.0], [0.05, 1.0]]), 0.9)
        updated = metric.with_values(np.array([2.0, 3.0]))
        assert_allclose(updated.Q, np.diag([2.0, 3.0]))
        assert_allclose(metric.trainable_values(), [1.0, 1.0])

    def test_negative_zeta_rejected(self):
        with pytest.raises(ValueError):
            sparsify(np.eye(2), -0.1)


class TestL1:
    def test_edge_weight(self):
        assert edge_weight(1.0, 1.0) == pytest.approx(np.exp(-1.0))
        assert edge_weight(0.0, 2.0) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            edge_weight(1.0, 0.0)

    def test_mahalanobis_identity_is_squared_euclidean(self):
        assert mahalanobis_distance([1.0, 2.0], [4.0, 6.0], np.eye(2)) == pytest.approx(25.0)

    def test_pairwise_matches_single_distance(self, features):
        Q = cholesky_init(empirical_covariance(features)).Q
        D = pairwise_distances(features, Q)
        assert_allclose(D, D.T)
        assert_allclose(np.diag(D), 0.0)
        assert D[2, 7] == pytest.approx(mahalanobis_distance(features[2], features[7], Q))

    def test_default_sigma(self):
        D = np.array([[0.0, 4.0, 9.0], [4.0, 0.0, 16.0], [9.0, 16.0, 0.0]])
        assert default_sigma_d(D) == pytest.approx(3.0)
        assert default_sigma_d(np.zeros((3, 3))) == 1.0

    def test_L1_is_positive_graph_laplacian(self, features):
        L = build_L1(features, np.eye(4))
        off = L - np.diag(np.diag(L))
        assert_allclose(L.sum(axis=1), 0.0, atol=1e-12)
        assert np.all(off <= 0)
        assert_allclose(L, L.T)

    def test_L1_with_explicit_sigma(self):
        F = np.array([[0.0], [1.0]])
        L = build_L1(F, np.eye(1), GraphParams(sigma_d=1.0))
        w = np.exp(-1.0)
        assert_allclose(L, [[w, -w], [-w, w]])

    def test_knn_restricts_edges(self, features):
        L = build_L1(features, np.eye(4), GraphParams(knn_k=2))
        D = pairwise_distances(features, np.eye(4))
        mask = knn_mask(D, 2)
        off = L - np.diag(np.diag(L))
        assert np.all(off[~mask] == 0)

    def test_knn_mask(self):
        D = np.array([[0.0, 1.0, 5.0], [1.0, 0.0, 2.0], [5.0, 2.0, 0.0]])
        mask = knn_mask(D, 1)
        assert_array_equal(mask, [[False, True, False], [True, False, True], [False, True, False]])
        assert not knn_mask(D, 5).diagonal().any()

    def test_graph_params_validation(self):
        with pytest.raises(ValueError):
            GraphParams(sigma_d=0.0)
        with pytest.raises(ValueError):
            GraphParams(alpha1=-1.0)
        with pytest.raises(ValueError):
            GraphParams(knn_k=0)


class TestLLE:
    def test_soft_threshold(self):
        assert_allclose(soft_threshold(np.array([0.5, 0.1, -1.0, 0.2]), 0.2), [0.3, 0.0, 0.0, 0.0])

    def test_project_s_plus(self):
        C = np.array([[5.0, 1.0], [-3.0, 2.0]])
        assert_allclose(project_s_plus(C), [[0.0, 0.0], [0.0, 0.0]])
        assert_allclose(project_s_plus(np.array([[0.0, 2.0], [0.0, 0.0]])), [[0.0, 1.0], [1.0, 0.0]])

    def test_coefficients_are_in_s_plus(self, features):
        coeff = lle_coefficients(features, 0.01)
        C = coeff.C
        assert_allclose(C, C.T)
        assert_allclose(np.diag(C), 0.0)
        assert np.all(C >= 0)
        assert coeff.eta == 0.01

    def test_objective_does_not_increase(self, features):
        coeff = lle_coefficients(features, 0.01)
        start = knn_mask(pairwise_distances(features, np.eye(4)), 10).astype(float)
        assert lle_objective(features, coeff.C, 0.01) <= lle_objective(features, start, 0.01)

    def test_duplicated_samples_couple(self):
        rng = np.random.default_rng(3)
        F = rng.standard_normal((6, 3)) * 3.0
        F[1] = F[0]
        C = lle_coefficients(F, 0.01).C
        assert C[0, 1] > 0

    def test_eta_must_be_positive(self, features):
        with pytest.raises(ValueError):
            lle_coefficients(features, 0.0)

    def test_adjust_lle(self):
        coeff = LLECoeff(C=np.ones((4, 4)) - np.eye(4), eta=0.01)
        adjusted = adjust_lle(coeff, [1, 1, -1, 0], gamma=2.0, mu=0.5)
        C = adjusted.C
        assert C[0, 1] == C[1, 0] == pytest.approx(3.0)
        assert C[0, 2] == C[2, 1] == pytest.approx(0.5)
        assert C[0, 3] == C[3, 2] == pytest.approx(1.0)
        assert_allclose(np.diag(C), 0.0)
        assert (adjusted.gamma, adjusted.mu) == (2.0, 0.5)

    def test_adjust_lle_clips_at_zero(self):
        coeff = LLECoeff(C=np.zeros((2, 2)), eta=0.01)
        assert_allclose(adjust_lle(coeff, [1, -1], gamma=1.0, mu=1.0).C, 0.0)

    def test_adjust_lle_dimension_check(self):
        with pytest.raises(DimensionError):
            adjust_lle(LLECoeff(C=np.zeros((3, 3)), eta=0.01), [1, -1], 1.0, 1.0)

    def test_L2_is_laplacian(self):
        C = np.array([[0.0, 2.0], [2.0, 0.0]])
        assert_allclose(build_L2(LLECoeff(C=C, eta=0.1)), [[2.0, -2.0], [-2.0, 2.0]])


class TestCombination:
    def test_combine(self):
        assert_allclose(combine(np.eye(2), 2 * np.eye(2), 0.5, 2.0), 4.5 * np.eye(2))

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            combine(np.eye(2), np.eye(2), -1.0, 1.0)

    @pytest.mark.parametrize("variant, P, expected", [
        (ParamVariant.Q, 1, 105),
        (ParamVariant.Q_LLE, 1, 109),
        (ParamVariant.Q_LLE, 3, 327),
    ])
    def test_param_count(self, variant, P, expected):
        assert param_count(14, P, variant) == expected

    def test_trainable_count_after_sparsify(self):
        metric = sparsify(np.array([[1.0, 0.0], [0.05, 1.0]]), 0.9)
        assert trainable_count(metric, ParamVariant.Q) == 2
        assert trainable_count(metric, ParamVariant.Q_LLE, P=2) == 12
