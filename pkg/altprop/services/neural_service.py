"""
Neural service: MLP forward/backward with manual backpropagation, Adam and
a finite-difference gradient checker.
"""

import logging
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from altprop.core.exceptions import ContractViolation, DataError, NumericalError
from altprop.models.mlp import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, AdamState, MlpModel
from altprop.models.sparse import DenseMatrix

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"ALTPMLP\x00"
CHECKPOINT_VERSION = 1


class LossKind(str, Enum):
    MSE = "mse"
    CE = "ce"


@dataclass
class ForwardCache:
    """Activations kept by a train-mode forward pass for backpropagation."""

    inputs: List[DenseMatrix]
    pre_activations: List[DenseMatrix]
    masks: List[Optional[DenseMatrix]]


@dataclass
class Gradients:
    weights: List[DenseMatrix]
    biases: List[DenseMatrix]


def softmax(Z: DenseMatrix) -> DenseMatrix:
    shifted = Z - Z.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def log_softmax(Z: DenseMatrix) -> DenseMatrix:
    shifted = Z - Z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def mlp_forward(
    model: MlpModel,
    X: DenseMatrix,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None
) -> Tuple[DenseMatrix, Optional[ForwardCache]]:
    """
    Forward pass; inverted dropout on each layer input only in train mode.

    Returns:
        (output logits, cache) where cache is None in eval mode
    """
    dropout = model.dropout_rate if train_mode else 0.0
    return _forward(model, X, dropout, rng, keep_cache=train_mode)


def _forward(
    model: MlpModel,
    X: DenseMatrix,
    dropout: float,
    rng: Optional[np.random.Generator],
    keep_cache: bool
) -> Tuple[DenseMatrix, Optional[ForwardCache]]:
    if X.ndim != 2 or X.shape[1] != model.layer_dims[0]:
        raise ContractViolation(
            "MLP input width mismatch",
            details={"expected": model.layer_dims[0], "got": list(X.shape)}
        )
    if dropout > 0.0 and rng is None:
        raise ContractViolation("Train-mode dropout needs a seeded generator")

    cache = ForwardCache(inputs=[], pre_activations=[], masks=[]) if keep_cache else None
    h = X
    last = model.n_layers - 1
    for layer, (W, b) in enumerate(zip(model.weights, model.biases)):
        mask = None
        if dropout > 0.0:
            keep = 1.0 - dropout
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
        z = h @ W + b
        if cache is not None:
            cache.inputs.append(h)
            cache.pre_activations.append(z)
            cache.masks.append(mask)
        h = np.maximum(z, 0.0) if layer < last else z
    return h, cache


def predict_output(model: MlpModel, X: DenseMatrix, loss_kind: LossKind = LossKind.MSE) -> DenseMatrix:
    """Eval-mode MLP(X) as fed to the F-update: raw output for MSE, probabilities for CE."""
    logits, _ = mlp_forward(model, X, train_mode=False)
    return softmax(logits) if LossKind(loss_kind) is LossKind.CE else logits


def _loss_and_output_grad(
    logits: DenseMatrix,
    targets: DenseMatrix,
    node_weights: DenseMatrix,
    loss_kind: LossKind
) -> Tuple[float, DenseMatrix]:
    n_rows = logits.shape[0]
    if n_rows == 0:
        return 0.0, np.zeros_like(logits)
    w = node_weights[:, None]
    if LossKind(loss_kind) is LossKind.MSE:
        diff = logits - targets
        per_row = np.sum(diff * diff, axis=1)
        grad = 2.0 * w * diff / n_rows
    else:
        logp = log_softmax(logits)
        per_row = -np.sum(targets * logp, axis=1)
        grad = w * (np.exp(logp) * targets.sum(axis=1, keepdims=True) - targets) / n_rows
    loss = float(np.sum(node_weights * per_row) / n_rows)
    return loss, grad


def _backward(model: MlpModel, cache: ForwardCache, grad_out: DenseMatrix) -> Gradients:
    grads_w: List[DenseMatrix] = [np.empty(0)] * model.n_layers
    grads_b: List[DenseMatrix] = [np.empty(0)] * model.n_layers
    dz = grad_out
    for layer in range(model.n_layers - 1, -1, -1):
        grads_w[layer] = cache.inputs[layer].T @ dz
        grads_b[layer] = dz.sum(axis=0)
        if layer == 0:
            break
        dh = dz @ model.weights[layer].T
        mask = cache.masks[layer]
        if mask is not None:
            dh = dh * mask
        dz = dh * (cache.pre_activations[layer - 1] > 0.0)
    return Gradients(weights=grads_w, biases=grads_b)


def loss_and_gradients(
    model: MlpModel,
    X: DenseMatrix,
    targets: DenseMatrix,
    node_weights: DenseMatrix,
    loss_kind: LossKind,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None
) -> Tuple[float, Gradients, DenseMatrix]:
    """Weighted mean loss, parameter gradients and the output-layer gradient."""
    if not (X.shape[0] == targets.shape[0] == node_weights.shape[0]):
        raise ContractViolation(
            "Row count mismatch between inputs, targets and weights",
            details={"X": X.shape[0], "targets": targets.shape[0], "weights": node_weights.shape[0]}
        )
    if targets.shape[1] != model.layer_dims[-1]:
        raise ContractViolation(
            "Target width does not match model output",
            details={"targets": targets.shape[1], "output": model.layer_dims[-1]}
        )
    dropout = model.dropout_rate if train_mode else 0.0
    logits, cache = _forward(model, X, dropout, rng, keep_cache=True)
    loss, grad_out = _loss_and_output_grad(logits, targets, node_weights, loss_kind)
    return loss, _backward(model, cache, grad_out), grad_out


def _adam_update(
    params: List[DenseMatrix],
    grads: List[DenseMatrix],
    m: List[DenseMatrix],
    v: List[DenseMatrix],
    lr: float,
    timestep: int
) -> None:
    bias1 = 1.0 - ADAM_BETA1 ** timestep
    bias2 = 1.0 - ADAM_BETA2 ** timestep
    for p, g, m_i, v_i in zip(params, grads, m, v):
        m_i *= ADAM_BETA1
        m_i += (1.0 - ADAM_BETA1) * g
        v_i *= ADAM_BETA2
        v_i += (1.0 - ADAM_BETA2) * g * g
        p -= lr * (m_i / bias1) / (np.sqrt(v_i / bias2) + ADAM_EPS)


def mlp_train_step(
    model: MlpModel,
    X_sel: DenseMatrix,
    targets: DenseMatrix,
    node_weights: DenseMatrix,
    loss_kind: Union[LossKind, str],
    lr: float,
    weight_decay: float = 0.0,
    rng: Optional[np.random.Generator] = None
) -> float:
    """
    One Adam step on the weighted loss Σ w_i ℓ_i / |rows|.

    Weight decay is added to weight-matrix gradients only (biases are not decayed).

    Raises:
        NumericalError: loss is NaN or infinite
    """
    loss_kind = LossKind(loss_kind)
    train_mode = model.dropout_rate > 0.0
    loss, grads, _ = loss_and_gradients(
        model, X_sel, targets, np.asarray(node_weights, dtype=np.float64),
        loss_kind, train_mode=train_mode, rng=rng
    )
    if not np.isfinite(loss):
        raise NumericalError(
            "MLP loss is not finite; lower the learning rate or raise the temperature",
            details={"loss": str(loss), "lr": lr, "loss_kind": loss_kind.value}
        )

    if weight_decay:
        grads.weights = [g + weight_decay * W for g, W in zip(grads.weights, model.weights)]

    state = model.optimizer_state
    state.timestep += 1
    _adam_update(model.weights, grads.weights, state.m_weights, state.v_weights, lr, state.timestep)
    _adam_update(model.biases, grads.biases, state.m_biases, state.v_biases, lr, state.timestep)
    return loss


def finite_diff_check(
    model: MlpModel,
    X: DenseMatrix,
    targets: DenseMatrix,
    weights: DenseMatrix,
    loss_kind: Union[LossKind, str],
    epsilon: float = 1e-6
) -> float:
    """
    Compare analytic gradients with central differences over every parameter.

    Returns:
        max |g_a − g_fd| / max(|g_a| + |g_fd|, 1e-8)
    """
    if not 1e-6 <= epsilon <= 1e-4:
        raise ContractViolation("epsilon must lie in [1e-6, 1e-4]", details={"epsilon": epsilon})
    if model.n_parameters > 10_000:
        raise ContractViolation("Gradient check limited to 10^4 parameters",
                                details={"parameters": model.n_parameters})

    loss_kind = LossKind(loss_kind)
    weights = np.asarray(weights, dtype=np.float64)
    _, grads, _ = loss_and_gradients(model, X, targets, weights, loss_kind)

    def loss_at() -> float:
        logits, _ = mlp_forward(model, X, train_mode=False)
        return _loss_and_output_grad(logits, targets, weights, loss_kind)[0]

    worst = 0.0
    tensors = list(zip(model.weights, grads.weights)) + list(zip(model.biases, grads.biases))
    for param, analytic in tensors:
        flat = param.reshape(-1)
        analytic_flat = analytic.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            plus = loss_at()
            flat[i] = original - epsilon
            minus = loss_at()
            flat[i] = original
            numeric = (plus - minus) / (2.0 * epsilon)
            g_a = analytic_flat[i]
            error = abs(g_a - numeric) / max(abs(g_a) + abs(numeric), 1e-8)
            worst = max(worst, error)
    return worst


def save_checkpoint(model: MlpModel, path: Union[str, Path]) -> None:
    """
    Write a versioned little-endian checkpoint.

    Layout: magic[8] | version u32 | n_dims u32 | dims u32*n_dims | dropout f64 |
    timestep u64 | per layer W f64 (row-major), b f64 | per layer m_W, v_W, m_b, v_b f64.
    """
    state = model.optimizer_state
    header = CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(model.layer_dims))
    header += struct.pack(f"<{len(model.layer_dims)}I", *model.layer_dims)
    header += struct.pack("<dQ", model.dropout_rate, state.timestep)
    chunks = [header]
    for W, b in zip(model.weights, model.biases):
        chunks += [W.astype("<f8").tobytes(), b.astype("<f8").tobytes()]
    for tensors in zip(state.m_weights, state.v_weights, state.m_biases, state.v_biases):
        chunks += [t.astype("<f8").tobytes() for t in tensors]
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: Union[str, Path]) -> MlpModel:
    """Read a checkpoint written by save_checkpoint (bit-exact)."""
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise DataError("Not an altprop checkpoint", details={"path": str(path)})
    version, n_dims = struct.unpack_from("<II", raw, 8)
    if version != CHECKPOINT_VERSION:
        raise DataError("Unsupported checkpoint version", details={"version": version})
    offset = 16
    dims = list(struct.unpack_from(f"<{n_dims}I", raw, offset))
    offset += 4 * n_dims
    dropout, timestep = struct.unpack_from("<dQ", raw, offset)
    offset += 16

    def take(shape: Tuple[int, ...]) -> DenseMatrix:
        nonlocal offset
        count = int(np.prod(shape))
        array = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += 8 * count
        return array.astype(np.float64)

    shapes = list(zip(dims[:-1], dims[1:]))
    weights, biases = [], []
    for fan_in, fan_out in shapes:
        weights.append(take((fan_in, fan_out)))
        biases.append(take((fan_out,)))
    state = AdamState(m_weights=[], v_weights=[], m_biases=[], v_biases=[], timestep=int(timestep))
    for fan_in, fan_out in shapes:
        state.m_weights.append(take((fan_in, fan_out)))
        state.v_weights.append(take((fan_in, fan_out)))
        state.m_biases.append(take((fan_out,)))
        state.v_biases.append(take((fan_out,)))
    if offset != len(raw):
        raise DataError("Trailing bytes in checkpoint", details={"path": str(path)})
    return MlpModel(layer_dims=dims, weights=weights, biases=biases,
                    dropout_rate=float(dropout), optimizer_state=state)
