"""
Pydantic schemas for run, benchmark and verification records.

Every record is emitted as one JSON line; summaries are recomputable from the run records alone.
"""

from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field


class RoundRecord(BaseModel):
    """One propagation round of the alternating loop."""
    round: int
    epoch: int  # MLP epochs completed so far, pretraining excluded
    mlp_loss: Optional[float] = None
    objective: Optional[float] = None
    selected: int = 0
    val_accuracy: float
    test_accuracy: Optional[float] = None  # filled in at final evaluation


class RunResult(BaseModel):
    """Outcome of a single (grid cell, split, repeat) run."""
    run_id: Optional[str] = None
    record: str = "run"
    method: str
    dataset: str
    cell: int = 0
    config: Dict[str, Any] = Field(default_factory=dict)
    label_rate: Union[int, float, None] = None
    split_seed: int = 0
    repeat: int = 0
    best_val_accuracy: float
    best_round: int = 0
    test_accuracy_at_best_val: float
    history: List[RoundRecord] = Field(default_factory=list)
    counters: Dict[str, int] = Field(default_factory=dict)
    wall_time: float = 0.0
    diagnostics: Dict[str, Any] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)
    test_label_reads: int = 0
    predictions: Optional[List[int]] = Field(default=None, exclude=True)

    def spmm_total(self, phase: str) -> int:
        """Sum of counters for one phase across operand widths."""
        return sum(count for key, count in self.counters.items() if key.split(":")[0] == phase)


class BenchRow(BaseModel):
    """Counter, memory and timing measurements for one k."""
    record: str = "bench"
    dataset: str
    rule: str
    rounds: int
    layers: int
    epochs: int
    f_spmm: int
    expected_f_spmm: int
    x_spmm: int
    peak_memory_mb: float
    rss_mb: float
    memory_estimate: bool = True
    wall_time: float
    test_accuracy: float
    counters: Dict[str, int] = Field(default_factory=dict)

    @property
    def counts_match(self) -> bool:
        return self.f_spmm == self.expected_f_spmm


class CheckResult(BaseModel):
    """One oracle check of the verification suite."""
    record: str = "check"
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    detail: str = ""


class SummaryRow(BaseModel):
    """Mean ± std of test accuracy at best validation for one grid cell."""
    record: str = "summary"
    dataset: str
    method: str
    label_rate: Union[int, float, None] = None
    cell: int
    config: Dict[str, Any] = Field(default_factory=dict)
    runs: int
    mean_test_accuracy: float
    std_test_accuracy: float
    mean_val_accuracy: float
