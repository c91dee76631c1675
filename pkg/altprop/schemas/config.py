"""
Pydantic schemas for training and experiment configuration.
"""

import itertools
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Type, TypeVar, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from altprop.core.exceptions import ConfigError
from altprop.services.neural_service import LossKind
from altprop.services.propagation_service import PropagationRule

ModelT = TypeVar("ModelT", bound=BaseModel)

SMALL_GRAPH_NODES = 20000
M_SMALL_GRAPH = 100
M_LARGE_GRAPH = 500


class HyperParams(BaseModel):
    """λ1, λ2, α, τ, K and pseudo labels per class m."""
    model_config = ConfigDict(frozen=True)

    lambda1: float = Field(default=0.5, ge=0)
    lambda2: float = Field(default=5.0, ge=0)
    alpha: float = Field(default=0.1, gt=0, lt=1)
    tau: float = Field(default=0.1, gt=0)
    K: int = Field(default=10, ge=0)
    m: Optional[int] = Field(default=None, ge=0)  # None: chosen from graph size

    def resolve_m(self, n: int) -> int:
        if self.m is not None:
            return self.m
        return M_SMALL_GRAPH if n < SMALL_GRAPH_NODES else M_LARGE_GRAPH


class ScheduleConfig(BaseModel):
    """Pretraining epochs s, total epochs e, propagation rounds k and the rule."""
    model_config = ConfigDict(frozen=True)

    pretrain_epochs: int = Field(default=100, ge=0)
    epochs: int = Field(default=500, ge=0)
    rounds: Union[int, Literal["full"]] = 5
    rule: PropagationRule = PropagationRule.MSE

    @field_validator("rounds", mode="before")
    @classmethod
    def parse_rounds(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() == "full":
            return "full"
        return value

    @field_validator("rounds")
    @classmethod
    def rounds_positive(cls, value: Union[int, str]) -> Union[int, str]:
        if value != "full" and int(value) < 1:
            raise ValueError("rounds must be at least 1")
        return value

    @model_validator(mode="after")
    def rounds_within_epochs(self) -> "ScheduleConfig":
        if self.rounds != "full" and self.epochs > 0 and int(self.rounds) > self.epochs:
            raise ValueError("rounds must not exceed epochs")
        return self

    @property
    def n_rounds(self) -> int:
        """k; `full` propagates after every epoch."""
        if self.rounds == "full":
            return max(self.epochs, 1)
        return int(self.rounds)

    def epoch_blocks(self) -> List[int]:
        """MLP epochs before each propagation round; the remainder goes to the last block."""
        k = self.n_rounds
        blocks = [self.epochs // k] * k
        blocks[-1] += self.epochs - sum(blocks)
        return blocks


class OptimConfig(BaseModel):
    """MLP optimizer and architecture settings."""
    model_config = ConfigDict(frozen=True)

    lr: float = Field(default=0.01, gt=0)
    weight_decay: float = Field(default=5e-4, ge=0)
    dropout: float = Field(default=0.5, ge=0, lt=1)
    hidden: List[int] = Field(default_factory=lambda: [64])
    loss: LossKind = LossKind.MSE
    batch_size: int = Field(default=0, ge=0)  # 0: full batch

    @field_validator("hidden", mode="before")
    @classmethod
    def parse_hidden(cls, value: Any) -> Any:
        if isinstance(value, int):
            return [value] if value > 0 else []
        if isinstance(value, str):
            parts = [p for p in value.lower().replace(" ", "").split("x") if p]
            return [int(p) for p in parts if int(p) > 0]
        return value

    @field_validator("hidden")
    @classmethod
    def hidden_positive(cls, value: List[int]) -> List[int]:
        if any(h <= 0 for h in value):
            raise ValueError("hidden sizes must be positive")
        return value


class TrainConfig(BaseModel):
    """One fully specified training configuration (a single grid point)."""
    model_config = ConfigDict(frozen=True)

    hyper: HyperParams = Field(default_factory=HyperParams)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    opt: OptimConfig = Field(default_factory=OptimConfig)
    seed: int = 0

    use_diffusion: bool = True
    use_pseudo: bool = True
    unified_eta: Optional[float] = Field(default=None, gt=0)
    unified_threshold: float = Field(default=0.0, ge=0, le=1)
    lp_alpha: float = Field(default=0.1, gt=0, lt=1)
    lp_layers: int = Field(default=50, ge=0)
    topk: List[int] = Field(default_factory=lambda: [10, 50, 100])

    @model_validator(mode="after")
    def rule_matches_loss(self) -> "TrainConfig":
        needs_probabilities = (PropagationRule.CE, PropagationRule.UNIFIED)
        if self.schedule.rule in needs_probabilities and self.opt.loss is not LossKind.CE:
            raise ValueError(f"rule {self.schedule.rule.value} requires loss ce")
        return self

    def with_overrides(self, **flat: Any) -> "TrainConfig":
        """Copy with flat KEY-style overrides (e.g. lambda1=0, rounds="full")."""
        data = self.model_dump()
        for key, value in flat.items():
            group, field = FIELD_GROUPS.get(key, (None, key))
            if group is None:
                data[field] = value
            else:
                data[group][field] = value
        return validated(TrainConfig, data)

    def flat(self) -> Dict[str, Any]:
        """Grid-cell label: every field keyed by its flat name."""
        data = self.model_dump(mode="json")
        out: Dict[str, Any] = {}
        for key, (group, field) in FIELD_GROUPS.items():
            out[key] = data[group][field] if group else data[field]
        return out


# Flat config key -> (group, field) inside TrainConfig.
FIELD_GROUPS: Dict[str, Tuple[Optional[str], str]] = {
    "lambda1": ("hyper", "lambda1"),
    "lambda2": ("hyper", "lambda2"),
    "alpha": ("hyper", "alpha"),
    "tau": ("hyper", "tau"),
    "k": ("hyper", "K"),
    "m": ("hyper", "m"),
    "pretrain_epochs": ("schedule", "pretrain_epochs"),
    "epochs": ("schedule", "epochs"),
    "rounds": ("schedule", "rounds"),
    "rule": ("schedule", "rule"),
    "lr": ("opt", "lr"),
    "weight_decay": ("opt", "weight_decay"),
    "dropout": ("opt", "dropout"),
    "hidden": ("opt", "hidden"),
    "loss": ("opt", "loss"),
    "batch_size": ("opt", "batch_size"),
    "seed": (None, "seed"),
    "use_diffusion": (None, "use_diffusion"),
    "use_pseudo": (None, "use_pseudo"),
    "unified_eta": (None, "unified_eta"),
    "unified_threshold": (None, "unified_threshold"),
    "lp_alpha": (None, "lp_alpha"),
    "lp_layers": (None, "lp_layers"),
    "topk": (None, "topk"),
}

# Keys that take a single value even though they contain commas.
LIST_VALUED_KEYS = {"topk"}

Method = Literal["altopt", "mlp", "lp", "diffused_mlp", "inductive"]


class ExperimentConfig(BaseModel):
    """Dataset, split protocol and the TrainConfig grid of one experiment."""

    name: str = "experiment"
    dataset: str
    method: Method = "altopt"
    label_rates: List[Union[int, float]] = Field(default_factory=lambda: [20])
    splits: int = Field(default=10, ge=1)
    repeats: int = Field(default=3, ge=1)
    seed: int = 0
    normalize_features: bool = True
    output: Optional[str] = None
    deterministic: bool = False
    grid: List[TrainConfig] = Field(default_factory=lambda: [TrainConfig()])

    @field_validator("label_rates")
    @classmethod
    def rates_valid(cls, value: List[Union[int, float]]) -> List[Union[int, float]]:
        for rate in value:
            if isinstance(rate, float) and not 0 < rate < 1:
                raise ValueError("fractional label rates must lie in (0, 1)")
            if isinstance(rate, int) and rate < 1:
                raise ValueError("per-class label counts must be at least 1")
        return value

    @field_validator("grid")
    @classmethod
    def grid_non_empty(cls, value: List[TrainConfig]) -> List[TrainConfig]:
        if not value:
            raise ValueError("grid must contain at least one configuration")
        return value

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        """Parse a flat KEY=value file (dotenv syntax, `#` comments)."""
        path = Path(path)
        if not path.is_file():
            raise ConfigError("Config file not found", details={"path": str(path)})
        return cls.from_mapping(dotenv_values(path))

    @classmethod
    def from_mapping(cls, raw: Dict[str, Optional[str]]) -> "ExperimentConfig":
        """
        Build from string values; comma-separated TrainConfig values form a cartesian grid.

        Raises:
            ConfigError: unknown key, unparsable or out-of-range value (names the field)
        """
        values = {key.strip().lower(): (value or "").strip() for key, value in raw.items()}
        experiment: Dict[str, Any] = {}
        axes: Dict[str, List[str]] = {}
        for key, value in values.items():
            if key in FIELD_GROUPS:
                if key in LIST_VALUED_KEYS:
                    axes[key] = [value]
                else:
                    axes[key] = [v.strip() for v in value.split(",") if v.strip()]
                if key == "seed":
                    experiment["seed"] = axes[key][0] if axes[key] else 0
            elif key == "label_rates":
                experiment[key] = [_parse_rate(v) for v in value.split(",") if v.strip()]
            elif key in cls.model_fields and key != "grid":
                experiment[key] = value
            else:
                raise ConfigError(f"Unknown config key: {key.upper()}", details={"field": key})

        base = TrainConfig()
        grid = []
        keys = list(axes)
        for combo in itertools.product(*(axes[k] for k in keys)):
            overrides = {k: _parse_field(k, v) for k, v in zip(keys, combo)}
            grid.append(base.with_overrides(**overrides))
        experiment["grid"] = grid or [base]
        return validated(cls, experiment)

    def cells(self) -> List[Tuple[int, TrainConfig]]:
        return list(enumerate(self.grid))


def _parse_rate(value: str) -> Union[int, float]:
    value = value.strip()
    try:
        if value.endswith("%"):
            return float(value[:-1]) / 100.0
        if "." in value:
            return float(value)
        return int(value)
    except ValueError as exc:
        raise ConfigError("Invalid label rate", details={"field": "label_rates", "value": value}) from exc


def _parse_field(key: str, value: str) -> Any:
    if key == "m" and value.lower() in ("", "auto"):
        return None
    if key == "unified_eta" and value.lower() in ("", "auto"):
        return None
    if key == "topk":
        return [int(v) for v in value.split(",") if v.strip()]
    return value


def validated(model: Type[ModelT], data: Dict[str, Any]) -> ModelT:
    """Validate into `model`, converting pydantic errors into ConfigError naming the field."""
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or model.__name__
        raise ConfigError(
            f"Invalid value for {field}: {first['msg']}",
            details={"field": field, "errors": exc.errors(include_url=False, include_context=False)}
        ) from exc
