"""
Tests for the F-update rules, label propagation forms and their oracles.
"""

import numpy as np
import pytest

from altprop.core.exceptions import ContractViolation, NumericalError
from altprop.services.data_service import data_service
from altprop.services.graph_service import build_graph, count_operations, permute_graph
from altprop.services.neural_service import softmax
from altprop.services.propagation_service import (
    PropagationParams,
    PropagationRule,
    altopt_fixed_point_oracle,
    altopt_objective,
    feature_diffusion,
    hetero_objective,
    label_propagation,
    lp_closed_form,
    prop2_loss_equivalence,
    propagate,
    update_F_ce,
    update_F_hetero,
    update_F_mse,
    update_F_unified,
    update_F_unmasked,
)

Y2 = np.array([[1.0, 0.0], [0.0, 0.0]])
UNIFORM2 = np.full((2, 2), 0.5)
LABELED0 = np.array([True, False])


def _instance(seed, n=20, c=3, p=0.3):
    rng = np.random.default_rng(seed)
    g = data_service.random_graph(n, p, seed=seed)
    labeled = rng.random(n) < 0.3
    Y = np.zeros((n, c))
    Y[np.flatnonzero(labeled), rng.integers(0, c, size=labeled.sum())] = 1.0
    return rng, g, labeled, Y


class TestMseRule:
    def test_two_node_example(self, edge_graph):
        """Test the worked 2-node update with λ1 = λ2 = 1."""
        F = update_F_mse(Y2, edge_graph, UNIFORM2, Y2, LABELED0, 1.0, 1.0)
        np.testing.assert_allclose(F, [[0.5, 1 / 6], [0.5, 1 / 6]], atol=1e-12)
        assert np.all(np.argmax(F, axis=1) == 0)

    def test_averaging_fixed_point(self):
        """Test the √d eigenvector is fixed when λ1 = λ2 = 0."""
        g = data_service.random_graph(15, 0.4, seed=4)
        F = 3.0 * np.sqrt(g.degrees)[:, None]
        out = update_F_mse(F, g, np.zeros_like(F), np.zeros_like(F), np.zeros(15, dtype=bool), 0.0, 0.0)
        assert np.abs(out - F).max() <= 1e-10

    def test_labeled_anchoring(self):
        """Test a huge λ2 pins labeled rows to Y after one update."""
        rng, g, labeled, Y = _instance(0)
        F = rng.random(Y.shape)
        out = update_F_mse(F, g, rng.random(Y.shape), Y, labeled, 1.0, 1e6)
        assert np.abs(out[labeled] - Y[labeled]).max() <= 1e-5

    def test_index_mask_matches_bool_mask(self):
        """Test labeled nodes may be given as indices."""
        rng, g, labeled, Y = _instance(1)
        F = rng.random(Y.shape)
        M = rng.random(Y.shape)
        np.testing.assert_array_equal(
            update_F_mse(F, g, M, Y, labeled, 0.5, 5.0),
            update_F_mse(F, g, M, Y, np.flatnonzero(labeled), 0.5, 5.0),
        )

    def test_nan_input_aborts(self, edge_graph):
        """Test NaN in F raises a numerical error."""
        F = Y2.copy()
        F[1, 1] = np.nan
        with pytest.raises(NumericalError):
            update_F_mse(F, edge_graph, UNIFORM2, Y2, LABELED0, 1.0, 1.0)

    def test_shape_mismatch(self, edge_graph):
        """Test a mismatched MLP output raises a contract violation."""
        with pytest.raises(ContractViolation):
            update_F_mse(Y2, edge_graph, np.ones((2, 3)), Y2, LABELED0, 1.0, 1.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_objective_descends(self, seed):
        """Test one step never increases the MSE objective."""
        rng, g, labeled, Y = _instance(seed)
        F = rng.standard_normal(Y.shape)
        M = rng.standard_normal(Y.shape)
        lam1, lam2 = rng.uniform(0, 3), rng.uniform(0, 10)
        before = altopt_objective(F, g, M, Y, labeled, lam1, lam2)
        after = altopt_objective(update_F_mse(F, g, M, Y, labeled, lam1, lam2), g, M, Y, labeled, lam1, lam2)
        assert after <= before + 1e-9

    def test_lp_recovery(self):
        """Test the unmasked form with λ1 = 0 is one LP step with α = λ2/(λ2+1)."""
        rng, g, _, Y = _instance(2)
        lam2 = 3.0
        out = update_F_unmasked(Y, g, rng.random(Y.shape), Y, 0.0, lam2)
        expected = label_propagation(Y, g, lam2 / (lam2 + 1.0), 1)
        assert np.abs(out - expected).max() <= 1e-12


class TestCeRule:
    def test_two_node_labeled_row(self, edge_graph):
        """Test the worked labeled-row value 0.25·log(0.5) + [0.5, 0]."""
        F = update_F_ce(Y2, edge_graph, UNIFORM2, Y2, LABELED0, 1.0, 1.0)
        np.testing.assert_allclose(F[0], [0.5 - 0.1732868, -0.1732868], atol=1e-7)

    def test_zero_lambda1_is_lp_step(self):
        """Test λ1 = 0 mixes ÃF and Y with weight λ2/(1+λ2) on labeled rows."""
        rng, g, labeled, Y = _instance(3)
        F = rng.random(Y.shape)
        lam2 = 2.0
        out = update_F_ce(F, g, softmax(rng.standard_normal(Y.shape)), Y, labeled, 0.0, lam2)
        AF = g.norm_adj.to_dense() @ F
        expected = np.where(labeled[:, None], (AF + lam2 * Y) / (1 + lam2), (AF + lam2 * F) / (1 + lam2))
        assert np.abs(out - expected).max() <= 1e-12

    def test_uniform_mlp_keeps_argmax(self):
        """Test a uniform MLP shifts all classes equally."""
        rng, g, labeled, Y = _instance(4)
        F = rng.random(Y.shape)
        uniform = np.full(Y.shape, 1.0 / Y.shape[1])
        ce = update_F_ce(F, g, uniform, Y, labeled, 1.0, 2.0)
        mse = update_F_mse(F, g, np.zeros_like(F), Y, labeled, 0.0, 2.0)
        np.testing.assert_array_equal(np.argmax(ce, axis=1), np.argmax(mse, axis=1))

    def test_non_stochastic_mlp_rejected(self, edge_graph):
        """Test MLP rows that do not sum to 1 are rejected."""
        with pytest.raises(ContractViolation):
            update_F_ce(Y2, edge_graph, np.full((2, 2), 0.6), Y2, LABELED0, 1.0, 1.0)


class TestHeteroRule:
    def test_edgeless_graph(self):
        """Test L̃ = I gives the MSE step with an extra shrink toward zero."""
        g = build_graph([], 3)
        rng = np.random.default_rng(5)
        F, M, Y = rng.random((3, 2)), rng.random((3, 2)), np.zeros((3, 2))
        mask = np.zeros(3, dtype=bool)
        lam1, lam2 = 1.0, 2.0
        eta = 1.0 / (2.0 * (lam1 + lam2 + 4.0))
        expected = F - 2.0 * eta * (lam1 * (F - M) + F)
        out = update_F_hetero(F, g, M, Y, mask, lam1, lam2)
        assert np.abs(out - expected).max() <= 1e-15

    def test_null_space_fixed(self):
        """Test √d-scaled constants are fixed when λ1 = λ2 = 0."""
        g = data_service.random_graph(15, 0.4, seed=6)
        F = np.sqrt(g.degrees)[:, None] * np.array([[1.0, -2.0]])
        out = update_F_hetero(F, g, np.zeros_like(F), np.zeros_like(F), np.zeros(15, dtype=bool), 0.0, 0.0)
        assert np.abs(out - F).max() <= 1e-10

    def test_two_spmm_calls(self, path_graph):
        """Test one hetero step costs two SpMM calls."""
        with count_operations() as counter:
            update_F_hetero(np.ones((3, 2)), path_graph, np.ones((3, 2)), np.zeros((3, 2)),
                            np.zeros(3, dtype=bool), 1.0, 1.0)
        assert counter.total() == 2

    @pytest.mark.parametrize("seed", range(10))
    def test_objective_descends(self, seed):
        """Test the hetero objective never increases."""
        rng, g, labeled, Y = _instance(seed)
        F = rng.standard_normal(Y.shape)
        M = rng.standard_normal(Y.shape)
        before = hetero_objective(F, g, M, Y, labeled, 0.5, 5.0)
        after = hetero_objective(update_F_hetero(F, g, M, Y, labeled, 0.5, 5.0), g, M, Y, labeled, 0.5, 5.0)
        assert after <= before + 1e-9


class TestUnifiedRule:
    def test_zero_gradient_fixed_point(self):
        """Test F is fixed when S(F) = MLP = Y and L̃F = 0."""
        F = np.zeros((2, 2))
        S = softmax(F)
        out = update_F_unified(F, build_graph([(0, 1)], 2), S, S, np.array([True, True]),
                               np.ones(2), 1.0, 1.0, 0.1)
        np.testing.assert_array_equal(out, F)

    def test_pure_smoothing_flow(self, path_graph):
        """Test λ1 = λ2 = 0 gives F − 2ηL̃F."""
        F = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
        eta = 0.1
        out = update_F_unified(F, path_graph, softmax(F), np.zeros_like(F), np.zeros(3, dtype=bool),
                               np.ones(3), 0.0, 0.0, eta)
        L = np.eye(3) - path_graph.norm_adj.to_dense()
        assert np.abs(out - (F - 2.0 * eta * L @ F)).max() <= 1e-14

    def test_weight_range_enforced(self, edge_graph):
        """Test weights outside [0, 1] are rejected."""
        with pytest.raises(ContractViolation):
            update_F_unified(Y2, edge_graph, UNIFORM2, Y2, LABELED0, np.array([1.5, 0.0]), 1.0, 1.0, 0.1)

    def test_nonpositive_eta(self, edge_graph):
        """Test η ≤ 0 is rejected."""
        with pytest.raises(ContractViolation):
            update_F_unified(Y2, edge_graph, UNIFORM2, Y2, LABELED0, np.ones(2), 1.0, 1.0, 0.0)


class TestPropagate:
    @pytest.mark.parametrize("rule", list(PropagationRule))
    def test_spmm_count_per_rule(self, rule, path_graph):
        """Test K steps cost K times the rule's SpMM cost."""
        params = PropagationParams(lambda1=1.0, lambda2=1.0, K=4, rule=rule)
        F = softmax(np.arange(6, dtype=float).reshape(3, 2))
        with count_operations() as counter:
            propagate(F, path_graph, softmax(F), np.zeros_like(F), np.array([0]), params)
        assert counter.total() == 4 * (2 if rule is PropagationRule.HETERO else 1)

    def test_zero_layers_is_identity(self, path_graph):
        """Test K = 0 returns F unchanged."""
        F = np.arange(6, dtype=float).reshape(3, 2)
        params = PropagationParams(lambda1=1.0, lambda2=1.0, K=0)
        np.testing.assert_array_equal(propagate(F, path_graph, F, F, np.array([0]), params), F)

    def test_permutation_equivariance(self):
        """Test relabeling nodes permutes the output rows."""
        rng, g, labeled, Y = _instance(7)
        F = rng.random(Y.shape)
        M = rng.random(Y.shape)
        params = PropagationParams(lambda1=0.5, lambda2=5.0, K=10)
        perm = rng.permutation(g.n)
        out = propagate(F, g, M, Y, labeled, params)
        out_perm = propagate(F[perm], permute_graph(g, perm), M[perm], Y[perm], labeled[perm], params)
        assert np.abs(out_perm - out[perm]).max() <= 1e-12

    def test_invalid_params(self):
        """Test negative λ and α outside (0, 1) are rejected."""
        with pytest.raises(ContractViolation):
            PropagationParams(lambda1=-1.0, lambda2=1.0)
        with pytest.raises(ContractViolation):
            PropagationParams(lambda1=1.0, lambda2=1.0, alpha=1.0)

    def test_step_sizes(self):
        """Test each rule's step size."""
        assert PropagationParams(0.5, 5.0).step_size == pytest.approx(1 / 13)
        assert PropagationParams(0.5, 5.0, rule=PropagationRule.CE).step_size == pytest.approx(1 / 12)
        assert PropagationParams(0.5, 5.0, rule=PropagationRule.HETERO).step_size == pytest.approx(1 / 19)


class TestLabelPropagation:
    def test_two_node_example(self, edge_graph):
        """Test one hand iteration with α = 0.5."""
        np.testing.assert_allclose(label_propagation(Y2, edge_graph, 0.5, 1), [[0.5, 0.0], [0.5, 0.0]])

    def test_zero_layers(self, path_graph):
        """Test K = 0 returns Y."""
        Y = np.eye(3)
        np.testing.assert_array_equal(label_propagation(Y, path_graph, 0.3, 0), Y)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_closed_form(self, seed):
        """Test iteration against the accumulated closed form on random graphs."""
        rng = np.random.default_rng(seed)
        g = data_service.random_graph(30, 0.15, seed=seed)
        Y = rng.random((30, 4))
        alpha = rng.uniform(0.05, 0.95)
        assert np.abs(label_propagation(Y, g, alpha, 10) - lp_closed_form(Y, g, alpha, 10)).max() <= 1e-10

    def test_closed_form_single_layer(self, path_graph):
        """Test K = 1 gives (1−α)ÃY + αY."""
        Y = np.eye(3)
        expected = 0.7 * path_graph.norm_adj.to_dense() @ Y + 0.3 * Y
        assert np.abs(lp_closed_form(Y, path_graph, 0.3, 1) - expected).max() <= 1e-15

    def test_closed_form_alpha_near_one(self, path_graph):
        """Test α → 1 collapses onto Y."""
        Y = np.eye(3)
        assert np.abs(lp_closed_form(Y, path_graph, 1 - 1e-12, 10) - Y).max() <= 1e-9

    def test_alpha_range(self, edge_graph):
        """Test α outside (0, 1) is rejected."""
        with pytest.raises(ContractViolation):
            label_propagation(Y2, edge_graph, 0.0, 3)


class TestFeatureDiffusion:
    def test_two_node_example(self, edge_graph):
        """Test one hand iteration on a single feature."""
        np.testing.assert_allclose(feature_diffusion(np.array([[1.0], [0.0]]), edge_graph, 0.5, 1), [[0.5], [0.5]])

    def test_complete_graph_constant_rows(self):
        """Test constant rows on a complete graph are unchanged."""
        n = 6
        g = build_graph([(i, j) for i in range(n) for j in range(i + 1, n)], n)
        X = np.tile([[0.2, 0.8, 1.5]], (n, 1))
        assert np.abs(feature_diffusion(X, g, 0.1, 10) - X).max() <= 1e-12

    def test_diffusion_phase(self, path_graph):
        """Test diffusion SpMMs are tagged with their own phase."""
        with count_operations() as counter:
            feature_diffusion(np.eye(3), path_graph, 0.1, 5)
        assert counter.total("diffusion") == 5
        assert counter.total() == 5


class TestFixedPointOracle:
    def test_label_anchoring(self, edge_graph):
        """Test λ2 = 1e6 with λ1 = 0 gives F* ≈ Y."""
        F = altopt_fixed_point_oracle(edge_graph, UNIFORM2, Y2, 0.0, 1e6)
        assert np.abs(F - Y2).max() <= 1e-5

    def test_edgeless_graph(self):
        """Test Ã = 0 gives the weighted average of MLP and Y."""
        g = build_graph([], 3)
        rng = np.random.default_rng(8)
        M, Y = rng.random((3, 2)), rng.random((3, 2))
        F = altopt_fixed_point_oracle(g, M, Y, 0.5, 2.0)
        assert np.abs(F - (0.5 * M + 2.0 * Y) / 3.5).max() <= 1e-14

    def test_iteration_converges(self):
        """Test 500 unmasked iterations land on the dense solve."""
        rng, g, _, Y = _instance(9)
        M = rng.random(Y.shape)
        F_star = altopt_fixed_point_oracle(g, M, Y, 0.5, 5.0)
        F = Y.copy()
        for _ in range(500):
            F = update_F_unmasked(F, g, M, Y, 0.5, 5.0)
        assert np.abs(F - F_star).max() <= 1e-8

    def test_size_limit(self):
        """Test the dense oracle refuses large graphs."""
        g = build_graph([], 201)
        with pytest.raises(ContractViolation):
            altopt_fixed_point_oracle(g, np.zeros((201, 2)), np.zeros((201, 2)), 1.0, 1.0)


class TestLossEquivalence:
    def test_three_node_path(self, path_graph):
        """Test both sides agree on an enumerable 3-node instance."""
        f = np.array([[0.7, 0.3], [0.4, 0.6], [0.2, 0.8]])
        f_prev = np.array([[0.6, 0.4], [0.5, 0.5], [0.1, 0.9]])
        Y = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        result = prop2_loss_equivalence(path_graph, f, f_prev, Y, [0, 2], 0.3, 0.1, 4)
        assert result.diff <= 1e-10

    def test_beta_equals_alpha(self, path_graph):
        """Test β = α leaves only the label double sum."""
        f = softmax(np.array([[1.0, 0.0], [0.0, 1.0], [0.3, 0.2]]))
        Y = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        result = prop2_loss_equivalence(path_graph, f, f, Y, [0, 2], 0.2, 0.2, 3)
        assert result.diff <= 1e-10
        assert result.lhs > 0

    def test_random_instances(self):
        """Test agreement on random 15-node instances."""
        worst = 0.0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            g = data_service.random_graph(15, 0.25, seed=seed)
            f = softmax(rng.standard_normal((15, 3)))
            f_prev = softmax(rng.standard_normal((15, 3)))
            labeled = rng.choice(15, size=5, replace=False)
            Y = np.zeros((15, 3))
            Y[labeled, rng.integers(0, 3, size=5)] = 1.0
            alpha = rng.uniform(0.1, 0.9)
            beta = rng.uniform(0.0, alpha)
            worst = max(worst, prop2_loss_equivalence(g, f, f_prev, Y, labeled, alpha, beta, 6).diff)
        assert worst <= 1e-9
