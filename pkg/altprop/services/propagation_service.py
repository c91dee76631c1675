"""
Propagation service: F-update rules, label propagation forms and closed-form oracles.

Every rule is a single gradient step on its objective with the step size that guarantees
descent; none of them normalizes F (the trainer applies the temperature softmax once per round).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from altprop.core.exceptions import ContractViolation, NumericalError
from altprop.models.sparse import DenseMatrix, SparseGraph
from altprop.services.graph_service import laplacian_quadratic, spmm, spmm_phase
from altprop.services.neural_service import softmax

logger = logging.getLogger(__name__)

LOG_CLAMP = 1e-12
STOCHASTIC_TOL = 1e-6
DENSE_ORACLE_MAX_NODES = 200


class PropagationRule(str, Enum):
    MSE = "mse"
    CE = "ce"
    HETERO = "hetero"
    UNIFIED = "unified"


# SpMM calls one application of each rule performs.
RULE_SPMM_COST = {
    PropagationRule.MSE: 1,
    PropagationRule.CE: 1,
    PropagationRule.HETERO: 2,
    PropagationRule.UNIFIED: 1,
}


@dataclass(frozen=True)
class PropagationParams:
    """λ1, λ2, α, layer count K and the rule; the step size follows from the rule."""

    lambda1: float
    lambda2: float
    alpha: float = 0.1
    K: int = 10
    rule: PropagationRule = PropagationRule.MSE

    def __post_init__(self) -> None:
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ContractViolation("lambda1 and lambda2 must be non-negative")
        if not 0.0 < self.alpha < 1.0:
            raise ContractViolation("alpha must lie in (0, 1)", details={"alpha": self.alpha})
        if self.K < 0:
            raise ContractViolation("K must be non-negative", details={"K": self.K})

    @property
    def step_size(self) -> float:
        if self.rule is PropagationRule.HETERO:
            return 1.0 / (2.0 * (self.lambda1 + self.lambda2 + 4.0))
        if self.rule is PropagationRule.CE:
            return 1.0 / (2.0 * (1.0 + self.lambda2))
        return 1.0 / (2.0 * (self.lambda1 + self.lambda2 + 1.0))


class Prop2Result(NamedTuple):
    lhs: float
    rhs: float
    diff: float


def _mask_column(labeled_mask: np.ndarray, n: int) -> DenseMatrix:
    mask = np.asarray(labeled_mask)
    if mask.dtype != bool:
        dense = np.zeros(n, dtype=bool)
        dense[mask.astype(np.int64)] = True
        mask = dense
    if mask.shape != (n,):
        raise ContractViolation("labeled_mask must have one entry per node",
                                details={"mask": list(mask.shape), "n": n})
    return mask.astype(np.float64)[:, None]


def _check_inputs(F: DenseMatrix, g: SparseGraph, *others: DenseMatrix) -> None:
    if F.ndim != 2 or F.shape[0] != g.n:
        raise ContractViolation("F must be n x c", details={"F": list(F.shape), "n": g.n})
    for other in others:
        if other.shape != F.shape:
            raise ContractViolation("Shape mismatch with F",
                                    details={"F": list(F.shape), "other": list(other.shape)})
    for matrix in (F,) + others:
        if not np.all(np.isfinite(matrix)):
            raise NumericalError("Non-finite values entering an F-update")


def _check_stochastic(P: DenseMatrix, name: str) -> None:
    deviation = np.abs(P.sum(axis=1) - 1.0)
    if deviation.size and deviation.max() > STOCHASTIC_TOL or np.any(P < 0):
        raise ContractViolation(
            f"{name} rows must be probability distributions",
            details={"max_row_sum_deviation": float(deviation.max()) if deviation.size else 0.0}
        )


def update_F_mse(
    F: DenseMatrix,
    g: SparseGraph,
    mlp_out: DenseMatrix,
    Y: DenseMatrix,
    labeled_mask: np.ndarray,
    lambda1: float,
    lambda2: float,
    step_scale: float = 1.0
) -> DenseMatrix:
    """
    Feature-enhanced label propagation step on λ1‖MLP−F‖² + tr(FᵀL̃F) + λ2‖F_L−Y_L‖².

    With η = 1/(2(λ1+λ2+1)) this is
        F′_L = (ÃF)_L/s + λ1·MLP_L/s + λ2·Y_L/s
        F′_U = (ÃF)_U/s + λ1·MLP_U/s + λ2·F_U/s,   s = λ1+λ2+1.
    `step_scale` multiplies η (debug hook for the descent check only).
    """
    _check_inputs(F, g, mlp_out, Y)
    mask = _mask_column(labeled_mask, g.n)
    eta = step_scale / (2.0 * (lambda1 + lambda2 + 1.0))
    AF = spmm(g.norm_adj, F)
    keep = 1.0 - 2.0 * eta * (lambda1 + 1.0 + lambda2 * mask)
    return keep * F + 2.0 * eta * (AF + lambda1 * mlp_out + lambda2 * mask * Y)


def update_F_ce(
    F: DenseMatrix,
    g: SparseGraph,
    mlp_out: DenseMatrix,
    Y: DenseMatrix,
    labeled_mask: np.ndarray,
    lambda1: float,
    lambda2: float,
    step_scale: float = 1.0
) -> DenseMatrix:
    """
    Step on λ1·CE(MLP, F) + tr(FᵀL̃F) + λ2‖F_L−Y_L‖² with η = 1/(2(1+λ2)):
        F′_L = λ1/(2(1+λ2))·log MLP_L + (ÃF)_L/(1+λ2) + λ2·Y_L/(1+λ2)
        F′_U = λ1/(2(1+λ2))·log MLP_U + (ÃF)_U/(1+λ2) + λ2·F_U/(1+λ2)
    """
    _check_inputs(F, g, mlp_out, Y)
    _check_stochastic(mlp_out, "MLP output")
    mask = _mask_column(labeled_mask, g.n)
    eta = step_scale / (2.0 * (1.0 + lambda2))
    AF = spmm(g.norm_adj, F)
    log_p = np.log(np.maximum(mlp_out, LOG_CLAMP))
    keep = 1.0 - 2.0 * eta * (1.0 + lambda2 * mask)
    return keep * F + eta * lambda1 * log_p + 2.0 * eta * (AF + lambda2 * mask * Y)


def update_F_hetero(
    F: DenseMatrix,
    g: SparseGraph,
    mlp_out: DenseMatrix,
    Y: DenseMatrix,
    labeled_mask: np.ndarray,
    lambda1: float,
    lambda2: float,
    step_scale: float = 1.0
) -> DenseMatrix:
    """
    Step on λ1‖MLP−F‖² + tr(FᵀL̃²F) + λ2‖F_L−Y_L‖² with η = 1/(2(λ1+λ2+4)).

    L̃²F = F − 2ÃF + Ã(ÃF): two SpMM calls.
    """
    _check_inputs(F, g, mlp_out, Y)
    mask = _mask_column(labeled_mask, g.n)
    eta = step_scale / (2.0 * (lambda1 + lambda2 + 4.0))
    AF = spmm(g.norm_adj, F)
    AAF = spmm(g.norm_adj, AF)
    L2F = F - 2.0 * AF + AAF
    grad = 2.0 * (lambda1 * (F - mlp_out) + L2F + lambda2 * mask * (F - Y))
    return F - eta * grad


def update_F_unified(
    F: DenseMatrix,
    g: SparseGraph,
    mlp_out: DenseMatrix,
    Y: DenseMatrix,
    labeled_mask: np.ndarray,
    weight_diag: DenseMatrix,
    lambda1: float,
    lambda2: float,
    eta: float
) -> DenseMatrix:
    """
    Gradient step F − η·(λ1·W(S(F) − MLP) + 2L̃F + λ2(S(F) − Y)) with S the row softmax.

    The label term acts on labeled rows only (Y is zero elsewhere).
    """
    if eta <= 0:
        raise ContractViolation("eta must be positive", details={"eta": eta})
    _check_inputs(F, g, mlp_out, Y)
    w = np.asarray(weight_diag, dtype=np.float64).reshape(-1)
    if w.shape != (g.n,) or np.any(w < 0) or np.any(w > 1):
        raise ContractViolation("weight_diag must hold n entries in [0, 1]")
    mask = _mask_column(labeled_mask, g.n)
    S = softmax(F)
    AF = spmm(g.norm_adj, F)
    grad = lambda1 * w[:, None] * (S - mlp_out) + 2.0 * (F - AF) + lambda2 * mask * (S - Y)
    return F - eta * grad


def update_F_unmasked(
    F: DenseMatrix,
    g: SparseGraph,
    mlp_out: DenseMatrix,
    Y: DenseMatrix,
    lambda1: float,
    lambda2: float
) -> DenseMatrix:
    """Y-anchored form applied to every row: (ÃF + λ1·MLP + λ2·Y)/(λ1+λ2+1)."""
    _check_inputs(F, g, mlp_out, Y)
    s = lambda1 + lambda2 + 1.0
    return (spmm(g.norm_adj, F) + lambda1 * mlp_out + lambda2 * Y) / s


def propagate(
    F: DenseMatrix,
    g: SparseGraph,
    mlp_out: DenseMatrix,
    Y: DenseMatrix,
    labeled_mask: np.ndarray,
    params: PropagationParams,
    weight_diag: Optional[DenseMatrix] = None,
    eta: Optional[float] = None
) -> DenseMatrix:
    """Apply K steps of the configured rule (no normalization in between)."""
    rule = PropagationRule(params.rule)
    for _ in range(params.K):
        if rule is PropagationRule.MSE:
            F = update_F_mse(F, g, mlp_out, Y, labeled_mask, params.lambda1, params.lambda2)
        elif rule is PropagationRule.CE:
            F = update_F_ce(F, g, mlp_out, Y, labeled_mask, params.lambda1, params.lambda2)
        elif rule is PropagationRule.HETERO:
            F = update_F_hetero(F, g, mlp_out, Y, labeled_mask, params.lambda1, params.lambda2)
        else:
            weights = np.ones(g.n) if weight_diag is None else weight_diag
            F = update_F_unified(F, g, mlp_out, Y, labeled_mask, weights,
                                 params.lambda1, params.lambda2,
                                 params.step_size if eta is None else eta)
    return F


def label_propagation(Y: DenseMatrix, g: SparseGraph, alpha: float, K: int) -> DenseMatrix:
    """K iterations of P ← (1−α)ÃP + αY from P(0) = Y."""
    _check_lp_args(Y, g, alpha, K)
    P = Y.copy()
    for _ in range(K):
        P = (1.0 - alpha) * spmm(g.norm_adj, P) + alpha * Y
    return P


def lp_closed_form(Y: DenseMatrix, g: SparseGraph, alpha: float, K: int) -> DenseMatrix:
    """
    ĀY with Ā = (1−α)^K Ã^K + α Σ_{k<K} (1−α)^k Ã^k.

    Accumulates the powers Ã^k Y one SpMM at a time; Ā is never formed.
    """
    _check_lp_args(Y, g, alpha, K)
    term = Y.copy()
    out = np.zeros_like(Y, dtype=np.float64)
    for k in range(K):
        out += alpha * (1.0 - alpha) ** k * term
        term = spmm(g.norm_adj, term)
    out += (1.0 - alpha) ** K * term
    return out


def feature_diffusion(X: DenseMatrix, g: SparseGraph, alpha: float, K: int) -> DenseMatrix:
    """Smoothed features X′ = LP(X, α) with K layers."""
    with spmm_phase("diffusion"):
        return label_propagation(np.asarray(X, dtype=np.float64), g, alpha, K)


def _check_lp_args(Y: DenseMatrix, g: SparseGraph, alpha: float, K: int) -> None:
    if Y.ndim != 2 or Y.shape[0] != g.n:
        raise ContractViolation("Propagated matrix must have n rows",
                                details={"rows": Y.shape[0], "n": g.n})
    if not 0.0 < alpha < 1.0:
        raise ContractViolation("alpha must lie in (0, 1)", details={"alpha": alpha})
    if K < 0:
        raise ContractViolation("K must be non-negative", details={"K": K})


def altopt_fixed_point_oracle(
    g: SparseGraph,
    mlp_out: DenseMatrix,
    Y: DenseMatrix,
    lambda1: float,
    lambda2: float
) -> DenseMatrix:
    """Dense solve of (sI − Ã)F* = λ1·MLP + λ2·Y, s = λ1+λ2+1 (the K → ∞ limit)."""
    if g.n > DENSE_ORACLE_MAX_NODES:
        raise ContractViolation("Dense fixed-point oracle limited to 200 nodes", details={"n": g.n})
    s = lambda1 + lambda2 + 1.0
    system = s * np.eye(g.n) - g.norm_adj.to_dense()
    try:
        return scipy.linalg.solve(system, lambda1 * mlp_out + lambda2 * Y, assume_a="sym")
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError("Fixed-point system is singular", details={"s": s}) from exc


def prop2_loss_equivalence(
    g: SparseGraph,
    mlp_probs_current: DenseMatrix,
    mlp_probs_prev: DenseMatrix,
    Y: DenseMatrix,
    labeled_set: Sequence[int],
    alpha: float,
    beta: float,
    K: int
) -> Prop2Result:
    """
    CE against propagated targets versus its pairwise expansion.

    lhs = CE(f, Ā((α−β)f′ + βY))
    rhs = (α−β) Σ_{i,j} ā_ij CE(f_i, f′_j) + β Σ_{i, j∈L} ā_ij CE(f_i, y_j)
    """
    _check_stochastic(mlp_probs_current, "Current predictions")
    _check_stochastic(mlp_probs_prev, "Previous predictions")
    mask = _mask_column(np.asarray(labeled_set, dtype=np.int64), g.n)
    Y_L = Y * mask
    log_f = np.log(np.maximum(mlp_probs_current, LOG_CLAMP))

    targets = lp_closed_form((alpha - beta) * mlp_probs_prev + beta * Y_L, g, alpha, K)
    lhs = float(-np.sum(targets * log_f))

    A_bar = lp_closed_form(np.eye(g.n), g, alpha, K)
    ce_prev = -(log_f @ mlp_probs_prev.T)
    ce_label = -(log_f @ Y_L.T)
    labeled = np.flatnonzero(mask[:, 0])
    rhs = float(
        (alpha - beta) * np.sum(A_bar * ce_prev)
        + beta * np.sum(A_bar[:, labeled] * ce_label[:, labeled])
    )
    return Prop2Result(lhs=lhs, rhs=rhs, diff=abs(lhs - rhs))


def altopt_objective(
    F: DenseMatrix,
    g: SparseGraph,
    mlp_out: DenseMatrix,
    Y: DenseMatrix,
    labeled_mask: np.ndarray,
    lambda1: float,
    lambda2: float
) -> float:
    """λ1‖MLP−F‖² + tr(FᵀL̃F) + λ2‖F_L−Y_L‖²."""
    mask = _mask_column(labeled_mask, g.n)
    with spmm_phase("objective"):
        smooth = laplacian_quadratic(F, g)
    return float(lambda1 * np.sum((mlp_out - F) ** 2) + smooth
                 + lambda2 * np.sum(mask * (F - Y) ** 2))


def hetero_objective(
    F: DenseMatrix,
    g: SparseGraph,
    mlp_out: DenseMatrix,
    Y: DenseMatrix,
    labeled_mask: np.ndarray,
    lambda1: float,
    lambda2: float
) -> float:
    """λ1‖MLP−F‖² + tr(FᵀL̃²F) + λ2‖F_L−Y_L‖², with tr(FᵀL̃²F) = ‖L̃F‖²."""
    mask = _mask_column(labeled_mask, g.n)
    with spmm_phase("objective"):
        LF = F - spmm(g.norm_adj, F)
    return float(lambda1 * np.sum((mlp_out - F) ** 2) + np.sum(LF * LF)
                 + lambda2 * np.sum(mask * (F - Y) ** 2))


def ce_objective(
    F: DenseMatrix,
    g: SparseGraph,
    mlp_out: DenseMatrix,
    Y: DenseMatrix,
    labeled_mask: np.ndarray,
    lambda1: float,
    lambda2: float
) -> float:
    """λ1·CE(MLP, F) + tr(FᵀL̃F) + λ2‖F_L−Y_L‖² with CE(MLP, F) = −Σ F log MLP."""
    mask = _mask_column(labeled_mask, g.n)
    with spmm_phase("objective"):
        smooth = laplacian_quadratic(F, g)
    log_p = np.log(np.maximum(mlp_out, LOG_CLAMP))
    return float(-lambda1 * np.sum(F * log_p) + smooth + lambda2 * np.sum(mask * (F - Y) ** 2))


def unified_objective(
    F: DenseMatrix,
    g: SparseGraph,
    mlp_out: DenseMatrix,
    Y: DenseMatrix,
    labeled_mask: np.ndarray,
    weight_diag: DenseMatrix,
    lambda1: float,
    lambda2: float
) -> float:
    """λ1·Σ w_i CE(MLP_i, S(F)_i) + tr(FᵀL̃F) + λ2·Σ_L CE(Y_i, S(F)_i)."""
    mask = _mask_column(labeled_mask, g.n)
    log_s = np.log(np.maximum(softmax(F), LOG_CLAMP))
    w = np.asarray(weight_diag, dtype=np.float64).reshape(-1, 1)
    with spmm_phase("objective"):
        smooth = laplacian_quadratic(F, g)
    return float(-lambda1 * np.sum(w * mlp_out * log_s) + smooth
                 - lambda2 * np.sum(mask * Y * log_s))


def rule_objective(
    rule: Union[PropagationRule, str],
    F: DenseMatrix,
    g: SparseGraph,
    mlp_out: DenseMatrix,
    Y: DenseMatrix,
    labeled_mask: np.ndarray,
    lambda1: float,
    lambda2: float,
    weight_diag: Optional[DenseMatrix] = None
) -> float:
    """Objective whose descent the given rule follows."""
    rule = PropagationRule(rule)
    if rule is PropagationRule.HETERO:
        return hetero_objective(F, g, mlp_out, Y, labeled_mask, lambda1, lambda2)
    if rule is PropagationRule.CE:
        return ce_objective(F, g, mlp_out, Y, labeled_mask, lambda1, lambda2)
    if rule is PropagationRule.UNIFIED:
        weights = np.ones(g.n) if weight_diag is None else weight_diag
        return unified_objective(F, g, mlp_out, Y, labeled_mask, weights, lambda1, lambda2)
    return altopt_objective(F, g, mlp_out, Y, labeled_mask, lambda1, lambda2)
