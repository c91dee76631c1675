"""
`altprop train`: run an experiment grid over splits and repeats.
"""

import argparse
import logging
from typing import Any, Dict, List, TextIO

from altprop.cli.deps import common_options, effective_settings, record_stream, table_stream, write_records
from altprop.core.exceptions import ConfigError
from altprop.schemas.config import ExperimentConfig
from altprop.schemas.results import SummaryRow
from altprop.services.data_service import data_service
from altprop.services.trainer_service import trainer_service

logger = logging.getLogger(__name__)


def register(subparsers: Any) -> None:
    parser = subparsers.add_parser("train", parents=[common_options()], help="run an experiment grid")
    parser.add_argument("--dataset", default=None, help="override DATASET from the config")
    parser.set_defaults(handler=run)


def load_experiment(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is None and args.dataset is None:
        raise ConfigError("train needs --config or --dataset", details={"field": "config"})
    experiment = (
        ExperimentConfig.from_file(args.config) if args.config
        else ExperimentConfig(dataset=args.dataset)
    )
    updates: Dict[str, Any] = {}
    if args.dataset:
        updates["dataset"] = args.dataset
    if args.seed is not None:
        updates["seed"] = args.seed
        updates["grid"] = [config.with_overrides(seed=args.seed) for config in experiment.grid]
    if args.deterministic:
        updates["deterministic"] = True
    if args.out:
        updates["output"] = args.out
    return experiment.model_copy(update=updates)


def print_summary(rows: List[SummaryRow], stream: TextIO) -> None:
    stream.write(f"{'dataset':<16} {'method':<13} {'rate':>6} {'cell':>4} {'runs':>4}  test acc (%)\n")
    for row in rows:
        stream.write(
            f"{row.dataset:<16} {row.method:<13} {str(row.label_rate):>6} {row.cell:>4} {row.runs:>4}  "
            f"{100 * row.mean_test_accuracy:.2f} ± {100 * row.std_test_accuracy:.2f}\n"
        )
    stream.flush()


def run(args: argparse.Namespace) -> int:
    experiment = load_experiment(args)
    settings = effective_settings(args)
    workers = 1 if experiment.deterministic else settings.worker_count

    dataset = data_service.resolve(experiment.dataset, experiment.normalize_features)
    splits = {
        rate: [data_service.make_split(dataset, rate, experiment.seed + i) for i in range(experiment.splits)]
        for rate in experiment.label_rates
    }
    results = trainer_service.run_experiment(experiment, dataset, splits, workers=workers)
    summary = trainer_service.summarize(results)

    with record_stream(experiment.output) as stream:
        write_records(stream, results)
        write_records(stream, summary)
    print_summary(summary, table_stream(args))
    return 0
