"""
Tests for the MLP, its manual backpropagation, Adam and checkpoints.
"""

import numpy as np
import pytest

from altprop.core.exceptions import ContractViolation, DataError, NumericalError
from altprop.models.mlp import MlpModel
from altprop.services.neural_service import (
    LossKind,
    finite_diff_check,
    load_checkpoint,
    loss_and_gradients,
    mlp_forward,
    mlp_train_step,
    save_checkpoint,
    softmax,
)


def _model(rng, dims, dropout=0.0):
    """Glorot model with random nonzero biases (keeps ReLU units away from kinks)."""
    model = MlpModel.initialize(dims, rng, dropout)
    model.biases = [rng.uniform(-0.5, 0.5, size=b.shape) for b in model.biases]
    return model


def test_zero_parameters_give_zero_output(rng):
    """Test zero weights and biases produce zero output."""
    model = MlpModel.initialize([3, 4, 2], rng)
    model.weights = [np.zeros_like(w) for w in model.weights]
    out, cache = mlp_forward(model, rng.standard_normal((5, 3)))
    np.testing.assert_array_equal(out, np.zeros((5, 2)))
    assert cache is None


def test_identity_single_layer(rng):
    """Test a single identity layer returns its input."""
    model = MlpModel(layer_dims=[3, 3], weights=[np.eye(3)], biases=[np.zeros(3)])
    X = rng.standard_normal((4, 3))
    out, _ = mlp_forward(model, X)
    np.testing.assert_array_equal(out, X)


def test_hand_unrolled_relu_chain():
    """Test a 2-layer forward pass against a manual ReLU chain."""
    W1 = np.array([[1.0, -1.0], [0.5, 2.0]])
    b1 = np.array([0.0, -1.0])
    W2 = np.array([[2.0], [1.0]])
    b2 = np.array([0.5])
    model = MlpModel(layer_dims=[2, 2, 1], weights=[W1, W2], biases=[b1, b2])
    X = np.array([[1.0, 1.0], [2.0, -1.0]])
    # row 0: z1 = [1.5, 0.0] -> h = [1.5, 0] -> 3.5; row 1: z1 = [1.5, -5] -> h = [1.5, 0] -> 3.5
    out, _ = mlp_forward(model, X)
    np.testing.assert_allclose(out, [[3.5], [3.5]], atol=1e-15)


def test_input_width_mismatch(rng):
    """Test a wrong input width raises a contract violation."""
    model = MlpModel.initialize([3, 2], rng)
    with pytest.raises(ContractViolation):
        mlp_forward(model, np.ones((2, 4)))


def test_eval_mode_ignores_dropout(rng):
    """Test eval-mode forward equals the dropout-free forward exactly."""
    model = _model(rng, [4, 6, 3], dropout=0.5)
    X = rng.standard_normal((7, 4))
    plain = model.copy()
    plain.dropout_rate = 0.0
    np.testing.assert_array_equal(mlp_forward(model, X)[0], mlp_forward(plain, X)[0])


def test_train_mode_dropout_needs_generator(rng):
    """Test train-mode dropout without a generator is rejected."""
    model = _model(rng, [4, 3], dropout=0.5)
    with pytest.raises(ContractViolation):
        mlp_forward(model, np.ones((2, 4)), train_mode=True)


def test_zero_weights_leave_parameters(rng):
    """Test all-zero node weights give loss 0 and only advance the Adam timestep."""
    model = _model(rng, [4, 5, 3])
    before = model.copy()
    loss = mlp_train_step(model, rng.standard_normal((6, 4)), rng.random((6, 3)),
                          np.zeros(6), LossKind.MSE, lr=0.01, weight_decay=0.0)
    assert loss == 0.0
    assert model.optimizer_state.timestep == 1
    for a, b in zip(model.weights + model.biases, before.weights + before.biases):
        np.testing.assert_array_equal(a, b)


def test_zero_learning_rate_leaves_parameters(rng):
    """Test an Adam step with lr = 0 changes nothing."""
    model = _model(rng, [4, 5, 3])
    before = model.copy()
    mlp_train_step(model, rng.standard_normal((6, 4)), rng.random((6, 3)),
                   np.ones(6), LossKind.CE, lr=0.0, weight_decay=5e-4)
    for a, b in zip(model.weights + model.biases, before.weights + before.biases):
        np.testing.assert_array_equal(a, b)


def test_single_node_least_squares_gradient(rng):
    """Test the linear MSE gradient equals 2 x (Wx − f)ᵀ."""
    model = _model(rng, [3, 2])
    x = rng.standard_normal((1, 3))
    f = rng.standard_normal((1, 2))
    _, grads, _ = loss_and_gradients(model, x, f, np.ones(1), LossKind.MSE)
    residual = x @ model.weights[0] + model.biases[0] - f
    np.testing.assert_allclose(grads.weights[0], 2.0 * np.outer(x, residual), atol=1e-12)
    np.testing.assert_allclose(grads.biases[0], 2.0 * residual[0], atol=1e-12)


def test_ce_self_target_has_zero_output_gradient(rng):
    """Test CE against the model's own softmax has a vanishing output gradient."""
    model = _model(rng, [4, 5, 3])
    X = rng.standard_normal((6, 4))
    logits, _ = mlp_forward(model, X)
    _, _, grad_out = loss_and_gradients(model, X, softmax(logits), np.ones(6), LossKind.CE)
    assert np.abs(grad_out).max() <= 1e-10


def test_weight_decay_skips_biases(rng):
    """Test weight decay alone moves weights but not biases."""
    model = _model(rng, [3, 2])
    before = model.copy()
    mlp_train_step(model, np.zeros((2, 3)), np.zeros((2, 2)), np.zeros(2),
                   LossKind.MSE, lr=0.1, weight_decay=1.0)
    assert not np.array_equal(model.weights[0], before.weights[0])
    np.testing.assert_array_equal(model.biases[0], before.biases[0])


@pytest.mark.parametrize("loss_kind", [LossKind.MSE, LossKind.CE])
def test_finite_differences(loss_kind):
    """Test analytic gradients against central differences."""
    for seed in range(5):
        rng = np.random.default_rng(seed)
        model = _model(rng, [4, 5, 3])
        X = rng.standard_normal((8, 4))
        targets = 2.0 * rng.standard_normal((8, 3)) if loss_kind is LossKind.MSE \
            else softmax(rng.standard_normal((8, 3)))
        error = finite_diff_check(model, X, targets, rng.uniform(0.2, 1.0, size=8),
                                  loss_kind, epsilon=1e-5)
        assert error <= 1e-5


def test_finite_differences_zero_input(rng):
    """Test the gradient check on zero inputs, where only bias paths carry gradient."""
    model = _model(rng, [3, 4, 2])
    error = finite_diff_check(model, np.zeros((5, 3)), rng.standard_normal((5, 2)),
                              np.ones(5), LossKind.MSE, epsilon=1e-5)
    assert error <= 1e-7


def test_finite_difference_epsilon_range(rng):
    """Test epsilon outside [1e-6, 1e-4] is rejected."""
    model = _model(rng, [3, 2])
    with pytest.raises(ContractViolation):
        finite_diff_check(model, np.ones((1, 3)), np.ones((1, 2)), np.ones(1), LossKind.MSE, epsilon=1e-3)


def test_nan_loss_aborts(rng):
    """Test a NaN loss raises a numerical error carrying the learning rate."""
    model = _model(rng, [2, 2])
    X = np.array([[np.nan, 1.0]])
    with pytest.raises(NumericalError) as exc_info:
        mlp_train_step(model, X, np.ones((1, 2)), np.ones(1), LossKind.MSE, lr=0.05)
    assert exc_info.value.details["lr"] == 0.05


def test_same_seed_same_trajectory():
    """Test two runs with the same seed are bit-identical, dropout included."""
    def trajectory():
        rng = np.random.default_rng(42)
        model = _model(rng, [5, 8, 3], dropout=0.5)
        X = rng.standard_normal((10, 5))
        T = softmax(rng.standard_normal((10, 3)))
        losses = [mlp_train_step(model, X, T, np.ones(10), LossKind.CE, 0.01, 5e-4, rng) for _ in range(5)]
        return losses, model.weights

    losses_a, weights_a = trajectory()
    losses_b, weights_b = trajectory()
    assert losses_a == losses_b
    for a, b in zip(weights_a, weights_b):
        np.testing.assert_array_equal(a, b)


def test_checkpoint_round_trip(tmp_path, rng):
    """Test save/load is bit-exact, Adam state included."""
    model = _model(rng, [4, 6, 3], dropout=0.3)
    mlp_train_step(model, rng.standard_normal((5, 4)), rng.random((5, 3)), np.ones(5),
                   LossKind.MSE, 0.01, 0.0, rng)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)

    assert loaded.layer_dims == model.layer_dims
    assert loaded.dropout_rate == model.dropout_rate
    assert loaded.optimizer_state.timestep == 1
    for a, b in zip(loaded.weights + loaded.biases, model.weights + model.biases):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(loaded.optimizer_state.v_weights, model.optimizer_state.v_weights):
        np.testing.assert_array_equal(a, b)


def test_checkpoint_bad_magic(tmp_path):
    """Test a foreign file is rejected."""
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
    with pytest.raises(DataError):
        load_checkpoint(path)
