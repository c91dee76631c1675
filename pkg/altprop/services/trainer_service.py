"""
Trainer service: pretraining, the lazy alternating schedule, baselines and the inductive protocol.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from altprop.core.exceptions import ContractViolation, DataError, NumericalError
from altprop.middleware.logging import run_logging
from altprop.models.dataset import Dataset, LabelData, Split
from altprop.models.mlp import MlpModel
from altprop.models.sparse import DenseMatrix, IndexArray, SparseGraph
from altprop.schemas.config import ExperimentConfig, OptimConfig, TrainConfig
from altprop.schemas.results import RoundRecord, RunResult, SummaryRow
from altprop.services.graph_service import count_operations, induce_subgraph, spmm_phase
from altprop.services.neural_service import mlp_forward, mlp_train_step, predict_output
from altprop.services.propagation_service import (
    PropagationParams,
    PropagationRule,
    feature_diffusion,
    label_propagation,
    propagate,
    rule_objective,
)
from altprop.services.pseudo_label_service import (
    SelectionResult,
    select_balanced,
    softmax_temperature,
    topk_pseudo_label_accuracy,
    unified_weights,
)

logger = logging.getLogger(__name__)


class BaselineKind(str, Enum):
    MLP_ONLY = "mlp"
    LP_ONLY = "lp"
    DIFFUSED_MLP = "diffused_mlp"


def predict(P: DenseMatrix) -> IndexArray:
    """Per-node argmax; ties go to the lowest class index."""
    return np.argmax(P, axis=1).astype(np.int64)


def accuracy(predictions: IndexArray, idx: IndexArray, y: IndexArray) -> float:
    if len(idx) == 0:
        return 0.0
    return float(np.mean(predictions[idx] == y))


def _empty_selection(c: int) -> SelectionResult:
    return SelectionResult(np.empty(0, dtype=np.int64), np.empty(0), np.zeros(c, dtype=np.int64))


@dataclass
class AlternationState:
    """Everything the alternating loop produces, before test labels are read."""

    model: MlpModel
    F: DenseMatrix
    history: List[RoundRecord] = field(default_factory=list)
    round_predictions: List[IndexArray] = field(default_factory=list)
    first_round_P: Optional[DenseMatrix] = None


class TrainerService:
    """Service for training runs and experiment grids."""

    def propagation_params(self, config: TrainConfig) -> PropagationParams:
        return PropagationParams(
            lambda1=config.hyper.lambda1,
            lambda2=config.hyper.lambda2,
            alpha=config.hyper.alpha,
            K=config.hyper.K,
            rule=config.schedule.rule
        )

    def init_model(self, config: TrainConfig, d: int, c: int, rng: np.random.Generator) -> MlpModel:
        return MlpModel.initialize([d] + list(config.opt.hidden) + [c], rng, config.opt.dropout)

    def train_epoch(
        self,
        model: MlpModel,
        X: DenseMatrix,
        targets: DenseMatrix,
        weights: DenseMatrix,
        opt: OptimConfig,
        rng: np.random.Generator
    ) -> float:
        """One epoch: a single full-batch step, or shuffled mini-batches when batch_size is set."""
        rows = X.shape[0]
        if opt.batch_size <= 0 or opt.batch_size >= rows:
            return mlp_train_step(model, X, targets, weights, opt.loss, opt.lr, opt.weight_decay, rng)

        order = rng.permutation(rows)
        losses = []
        for start in range(0, rows, opt.batch_size):
            batch = order[start:start + opt.batch_size]
            losses.append(mlp_train_step(
                model, X[batch], targets[batch], weights[batch],
                opt.loss, opt.lr, opt.weight_decay, rng
            ))
        return float(np.mean(losses))

    def pretrain(
        self,
        model: MlpModel,
        X: DenseMatrix,
        labels: LabelData,
        s: int,
        opt: Optional[OptimConfig] = None,
        rng: Optional[np.random.Generator] = None
    ) -> MlpModel:
        """s epochs on labeled nodes only, one-hot targets with weight 1."""
        if labels.labeled_idx.size == 0:
            raise DataError("Cannot pretrain without labeled nodes")
        opt = opt or OptimConfig()
        rng = rng or np.random.default_rng(0)
        idx = labels.labeled_idx
        X_sel = X[idx]
        targets = labels.Y[idx]
        weights = np.ones(idx.size)
        for _ in range(s):
            self.train_epoch(model, X_sel, targets, weights, opt, rng)
        return model

    def alternate(
        self,
        config: TrainConfig,
        g: SparseGraph,
        X_feat: DenseMatrix,
        labels: LabelData,
        rng: np.random.Generator,
        round_hook: Optional[Callable[[MlpModel, DenseMatrix], None]] = None
    ) -> AlternationState:
        """
        Pretrain, then k rounds of [MLP block] -> [K propagation steps, normalize, select].

        Validation accuracy of argmax F is recorded every round; test labels are not touched.
        `round_hook(model, F)` sees each round's model and the F it is about to propagate.
        """
        params = self.propagation_params(config)
        m = config.hyper.resolve_m(g.n)
        mask = labels.labeled_mask
        labeled = labels.labeled_idx

        model = self.init_model(config, X_feat.shape[1], labels.c, rng)
        self.pretrain(model, X_feat, labels, config.schedule.pretrain_epochs, config.opt, rng)

        state = AlternationState(model=model, F=labels.Y.copy())
        selection = _empty_selection(labels.c)
        epochs_done = 0
        y_val = labels.val_labels()

        for round_idx, block in enumerate(config.schedule.epoch_blocks()):
            nodes = np.concatenate([labeled, selection.selected])
            weights = np.concatenate([np.ones(labeled.size), selection.weights])
            X_sel = X_feat[nodes]
            targets = state.F[nodes]
            mlp_loss = None
            for _ in range(block):
                mlp_loss = self.train_epoch(model, X_sel, targets, weights, config.opt, rng)
            epochs_done += block
            if round_hook is not None:
                round_hook(model, state.F)

            mlp_out = predict_output(model, X_feat, config.opt.loss)
            weight_diag = None
            if params.rule is PropagationRule.UNIFIED:
                weight_diag = unified_weights(state.F, config.unified_threshold)
            with spmm_phase("propagation"):
                F_raw = propagate(state.F, g, mlp_out, labels.Y, mask, params,
                                  weight_diag=weight_diag, eta=config.unified_eta)
            if not np.all(np.isfinite(F_raw)):
                raise NumericalError(
                    "Pseudo labels diverged",
                    details={"round": round_idx, "lr": config.opt.lr, "tau": config.hyper.tau}
                )
            objective = rule_objective(params.rule, F_raw, g, mlp_out, labels.Y, mask,
                                       params.lambda1, params.lambda2, weight_diag)

            state.F = softmax_temperature(F_raw, config.hyper.tau)
            if state.first_round_P is None:
                state.first_round_P = state.F.copy()
            selection = (
                select_balanced(state.F, labeled, m) if config.use_pseudo
                else _empty_selection(labels.c)
            )

            predictions = predict(state.F)
            state.round_predictions.append(predictions)
            state.history.append(RoundRecord(
                round=round_idx + 1,
                epoch=epochs_done,
                mlp_loss=mlp_loss,
                objective=objective,
                selected=selection.size,
                val_accuracy=accuracy(predictions, labels.val_idx, y_val)
            ))
            logger.debug(
                f"Round done | Round: {round_idx + 1} | Epoch: {epochs_done} | "
                f"Val: {state.history[-1].val_accuracy:.4f} | Selected: {selection.size}"
            )
        return state

    def _finalize(
        self,
        result: Dict[str, Any],
        history: List[RoundRecord],
        round_predictions: List[IndexArray],
        labels: LabelData
    ) -> RunResult:
        """Read test labels once, back-fill per-round test accuracy, select by validation."""
        y_test = labels.test_labels()
        for record, predictions in zip(history, round_predictions):
            record.test_accuracy = accuracy(predictions, labels.test_idx, y_test)

        if not history:
            raise ContractViolation("A run must record at least one round")
        best = 0
        for i, record in enumerate(history):
            if record.val_accuracy > history[best].val_accuracy:
                best = i
        return RunResult(
            best_val_accuracy=history[best].val_accuracy,
            best_round=history[best].round,
            test_accuracy_at_best_val=history[best].test_accuracy,
            history=history,
            test_label_reads=labels.test_access_count,
            predictions=round_predictions[best].tolist(),
            **result
        )

    def run_altopt(
        self,
        config: TrainConfig,
        g: SparseGraph,
        X: DenseMatrix,
        labels: LabelData,
        y_true: Optional[IndexArray] = None,
        seed: Optional[int] = None,
        dataset_name: str = "dataset"
    ) -> RunResult:
        """
        Full alternating-optimization run with model selection on validation accuracy.

        Args:
            y_true: ground truth for the top-K pseudo-label diagnostic; test nodes are never
                candidates, so their entries are not read
            seed: overrides config.seed for this run's generator
        """
        rng = np.random.default_rng(config.seed if seed is None else seed)
        start = time.perf_counter()
        with count_operations() as counter:
            X_feat = (
                feature_diffusion(X, g, config.hyper.alpha, config.hyper.K)
                if config.use_diffusion else np.asarray(X, dtype=np.float64)
            )
            state = self.alternate(config, g, X_feat, labels, rng)
        wall_time = time.perf_counter() - start

        diagnostics: Dict[str, Any] = {}
        if y_true is not None and state.first_round_P is not None:
            excluded = np.concatenate([labels.labeled_idx, labels.test_idx])
            diagnostics["topk_pseudo_label_accuracy"] = topk_pseudo_label_accuracy(
                state.first_round_P, excluded, y_true, config.topk
            )
        return self._finalize(
            {
                "method": "altopt",
                "dataset": dataset_name,
                "config": config.flat(),
                "counters": counter.snapshot(),
                "wall_time": wall_time,
                "diagnostics": diagnostics
            },
            state.history,
            state.round_predictions,
            labels
        )

    def _run_mlp_baseline(
        self,
        config: TrainConfig,
        X_feat: DenseMatrix,
        labels: LabelData,
        rng: np.random.Generator
    ) -> Tuple[List[RoundRecord], List[IndexArray]]:
        """Labeled-only MLP, validated every epoch; keeps predictions only at improvements."""
        model = self.init_model(config, X_feat.shape[1], labels.c, rng)
        idx = labels.labeled_idx
        if idx.size == 0:
            raise DataError("Cannot train without labeled nodes")
        X_sel, targets, weights = X_feat[idx], labels.Y[idx], np.ones(idx.size)
        y_val = labels.val_labels()

        history: List[RoundRecord] = []
        predictions: List[IndexArray] = []
        best_val = -1.0
        total = config.schedule.pretrain_epochs + config.schedule.epochs
        for epoch in range(1, total + 1):
            loss = self.train_epoch(model, X_sel, targets, weights, config.opt, rng)
            logits, _ = mlp_forward(model, X_feat)
            current = predict(logits)
            val = accuracy(current, labels.val_idx, y_val)
            if val > best_val or epoch == total:
                best_val = max(best_val, val)
                history.append(RoundRecord(round=epoch, epoch=epoch, mlp_loss=loss, val_accuracy=val))
                predictions.append(current)
        return history, predictions

    def run_baseline(
        self,
        kind: BaselineKind,
        config: TrainConfig,
        g: SparseGraph,
        X: DenseMatrix,
        labels: LabelData,
        seed: Optional[int] = None,
        dataset_name: str = "dataset"
    ) -> RunResult:
        """MLP on raw features, label propagation alone, or MLP on diffused features."""
        kind = BaselineKind(kind)
        rng = np.random.default_rng(config.seed if seed is None else seed)
        start = time.perf_counter()
        with count_operations() as counter:
            if kind is BaselineKind.LP_ONLY:
                with spmm_phase("propagation"):
                    P = label_propagation(labels.Y, g, config.lp_alpha, config.lp_layers)
                current = predict(P)
                history = [RoundRecord(
                    round=1, epoch=0,
                    val_accuracy=accuracy(current, labels.val_idx, labels.val_labels())
                )]
                predictions = [current]
            else:
                X_feat = np.asarray(X, dtype=np.float64)
                if kind is BaselineKind.DIFFUSED_MLP:
                    X_feat = feature_diffusion(X_feat, g, config.hyper.alpha, config.hyper.K)
                history, predictions = self._run_mlp_baseline(config, X_feat, labels, rng)
        wall_time = time.perf_counter() - start

        return self._finalize(
            {
                "method": kind.value,
                "dataset": dataset_name,
                "config": config.flat(),
                "counters": counter.snapshot(),
                "wall_time": wall_time
            },
            history,
            predictions,
            labels
        )

    def infer_full_graph(
        self,
        model: MlpModel,
        config: TrainConfig,
        g: SparseGraph,
        X: DenseMatrix,
        labels: LabelData,
        F_init: Optional[DenseMatrix] = None
    ) -> DenseMatrix:
        """K steps of the rule on the full graph with MLP(X) and Y fixed, from F_init (default Y); normalized."""
        params = self.propagation_params(config)
        mlp_out = predict_output(model, X, config.opt.loss)
        F = labels.Y.copy() if F_init is None else F_init
        weight_diag = unified_weights(F, config.unified_threshold) \
            if params.rule is PropagationRule.UNIFIED else None
        with spmm_phase("inference"):
            F = propagate(F, g, mlp_out, labels.Y, labels.labeled_mask, params,
                          weight_diag=weight_diag, eta=config.unified_eta)
        if not np.all(np.isfinite(F)):
            raise NumericalError("Inference diverged", details={"tau": config.hyper.tau})
        return softmax_temperature(F, config.hyper.tau)

    def run_inductive(
        self,
        config: TrainConfig,
        g: SparseGraph,
        train_nodes: Sequence[int],
        X: DenseMatrix,
        labels: LabelData,
        seed: Optional[int] = None,
        dataset_name: str = "dataset"
    ) -> RunResult:
        """
        Train on the subgraph induced by `train_nodes` (raw features), infer on the full graph.

        Every round the current model is applied to the full graph: F starts from the
        training F on training nodes and from Y elsewhere, then K steps of the rule run
        with MLP(X) and Y fixed. Rounds are selected on validation accuracy, so a
        training set covering every node reproduces the transductive run exactly.

        Raises:
            ContractViolation: a labeled node lies outside the training set
        """
        keep = np.unique(np.asarray(train_nodes, dtype=np.int64))
        if not np.all(np.isin(labels.labeled_idx, keep)):
            raise ContractViolation("Training node set must contain every labeled node")
        config = config.with_overrides(use_diffusion=False)
        rng = np.random.default_rng(config.seed if seed is None else seed)
        X_full = np.asarray(X, dtype=np.float64)
        y_val = labels.val_labels()
        round_predictions: List[IndexArray] = []
        val_accuracies: List[float] = []

        def infer_round(model: MlpModel, F_train: DenseMatrix) -> None:
            F_init = labels.Y.copy()
            F_init[keep] = F_train
            current = predict(self.infer_full_graph(model, config, g, X_full, labels, F_init))
            round_predictions.append(current)
            val_accuracies.append(accuracy(current, labels.val_idx, y_val))

        start = time.perf_counter()
        with count_operations() as counter:
            sub, remap = induce_subgraph(g, keep)
            sub_labels = labels.restrict(keep, remap)
            state = self.alternate(config, sub, X_full[keep], sub_labels, rng, round_hook=infer_round)
        wall_time = time.perf_counter() - start

        history = [
            record.model_copy(update={"val_accuracy": val})
            for record, val in zip(state.history, val_accuracies)
        ]
        return self._finalize(
            {
                "method": "inductive",
                "dataset": dataset_name,
                "config": config.flat(),
                "counters": counter.snapshot(),
                "wall_time": wall_time,
                "diagnostics": {"train_nodes": int(keep.size)}
            },
            history,
            round_predictions,
            labels
        )

    def run_method(
        self,
        method: str,
        config: TrainConfig,
        dataset: Dataset,
        split: Split,
        seed: Optional[int] = None
    ) -> RunResult:
        """Dispatch one run of `method` on a dataset split."""
        labels = LabelData.from_split(dataset, split)
        if method == "altopt":
            result = self.run_altopt(config, dataset.graph, dataset.X, labels,
                                     y_true=dataset.y, seed=seed, dataset_name=dataset.name)
        elif method == "inductive":
            held_out = np.concatenate([split.val_idx, split.test_idx])
            train_nodes = np.setdiff1d(np.arange(dataset.n), held_out)
            result = self.run_inductive(config, dataset.graph, train_nodes, dataset.X, labels,
                                        seed=seed, dataset_name=dataset.name)
        else:
            result = self.run_baseline(BaselineKind(method), config, dataset.graph, dataset.X,
                                       labels, seed=seed, dataset_name=dataset.name)
        result.label_rate = split.label_rate
        result.split_seed = split.seed
        result.warnings = list(split.warnings)
        return result

    def run_experiment(
        self,
        experiment: ExperimentConfig,
        dataset: Dataset,
        splits: Dict[Any, List[Split]],
        workers: int = 1
    ) -> List[RunResult]:
        """
        Every (grid cell, label rate, split, repeat) as an independent task.

        Results come back in task order whatever the worker count.
        """
        tasks = []
        for cell, config in experiment.cells():
            for rate in experiment.label_rates:
                for split in splits[rate]:
                    for repeat in range(experiment.repeats):
                        seed = int(np.random.SeedSequence(
                            [config.seed, split.seed, repeat]
                        ).generate_state(1)[0])
                        tasks.append({
                            "method": experiment.method,
                            "dataset": dataset.name,
                            "cell": cell,
                            "config": config,
                            "split": split,
                            "split_seed": split.seed,
                            "repeat": repeat,
                            "seed": seed
                        })

        def execute(task: Dict[str, Any]) -> RunResult:
            result = self.run_method(task["method"], task["config"], dataset, task["split"], task["seed"])
            result.cell = task["cell"]
            result.repeat = task["repeat"]
            return result

        def dispatch(task: Dict[str, Any]) -> RunResult:
            return run_logging.dispatch(task, execute)

        logger.info(
            f"Experiment started | Name: {experiment.name} | Tasks: {len(tasks)} | Workers: {workers}"
        )
        if workers <= 1:
            return [dispatch(task) for task in tasks]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(dispatch, tasks))

    def summarize(self, results: Sequence[RunResult]) -> List[SummaryRow]:
        """Mean ± std of test accuracy at best validation per (dataset, method, rate, cell)."""
        groups: Dict[Tuple[str, str, str, int], List[RunResult]] = {}
        for result in results:
            key = (result.dataset, result.method, str(result.label_rate), result.cell)
            groups.setdefault(key, []).append(result)

        rows = []
        for (dataset, method, _, cell), members in groups.items():
            test = np.array([r.test_accuracy_at_best_val for r in members])
            val = np.array([r.best_val_accuracy for r in members])
            rows.append(SummaryRow(
                dataset=dataset,
                method=method,
                label_rate=members[0].label_rate,
                cell=cell,
                config=members[0].config,
                runs=len(members),
                mean_test_accuracy=float(test.mean()),
                std_test_accuracy=float(test.std()),
                mean_val_accuracy=float(val.mean())
            ))
        return rows


trainer_service = TrainerService()
