"""
MLP data model: layer parameters paired with Adam optimizer state.
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np

from altprop.models.sparse import DenseMatrix

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    """First/second moments per parameter tensor plus the shared timestep."""

    m_weights: List[DenseMatrix]
    v_weights: List[DenseMatrix]
    m_biases: List[DenseMatrix]
    v_biases: List[DenseMatrix]
    timestep: int = 0

    @classmethod
    def zeros_like(cls, weights: List[DenseMatrix], biases: List[DenseMatrix]) -> "AdamState":
        return cls(
            m_weights=[np.zeros_like(w) for w in weights],
            v_weights=[np.zeros_like(w) for w in weights],
            m_biases=[np.zeros_like(b) for b in biases],
            v_biases=[np.zeros_like(b) for b in biases]
        )


@dataclass
class MlpModel:
    """
    Multilayer perceptron f_Θ with ReLU between layers.

    weights[l] has shape layer_dims[l] x layer_dims[l+1]; biases[l] has length layer_dims[l+1].
    """

    layer_dims: List[int]
    weights: List[DenseMatrix]
    biases: List[DenseMatrix]
    dropout_rate: float = 0.0
    optimizer_state: AdamState = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.optimizer_state is None:
            self.optimizer_state = AdamState.zeros_like(self.weights, self.biases)

    @classmethod
    def initialize(
        cls,
        layer_dims: List[int],
        rng: np.random.Generator,
        dropout_rate: float = 0.0
    ) -> "MlpModel":
        """Glorot-uniform weights, zero biases."""
        weights = []
        biases = []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(
            layer_dims=list(layer_dims),
            weights=weights,
            biases=biases,
            dropout_rate=dropout_rate
        )

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_parameters(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "MlpModel":
        state = self.optimizer_state
        return MlpModel(
            layer_dims=list(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            dropout_rate=self.dropout_rate,
            optimizer_state=AdamState(
                m_weights=[m.copy() for m in state.m_weights],
                v_weights=[v.copy() for v in state.v_weights],
                m_biases=[m.copy() for m in state.m_biases],
                v_biases=[v.copy() for v in state.v_biases],
                timestep=state.timestep
            )
        )
