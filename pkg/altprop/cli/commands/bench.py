"""
`altprop bench`: SpMM counters, memory and wall time for several propagation schedules.
"""

import argparse
from typing import Any, List, Union

from altprop.cli.deps import common_options, record_stream, table_stream, write_records
from altprop.core.exceptions import ConfigError, OracleFailure
from altprop.schemas.config import ExperimentConfig
from altprop.services.bench_service import bench_service
from altprop.services.data_service import data_service


def register(subparsers: Any) -> None:
    parser = subparsers.add_parser("bench", parents=[common_options()], help="counter/timing benchmark")
    parser.add_argument("--dataset", default=None, help="dataset directory or sbm: spec")
    parser.add_argument("--rounds", default="1,5", help="comma list of k values, `full` allowed")
    parser.add_argument("--rule", default="mse", choices=["mse", "ce", "hetero", "unified"])
    parser.add_argument("--label-rate", default="20", help="per-class count or fraction")
    parser.set_defaults(handler=run)


def parse_rounds(value: str) -> List[Union[int, str]]:
    rounds: List[Union[int, str]] = []
    for item in filter(None, (part.strip() for part in value.split(","))):
        if item.lower() == "full":
            rounds.append("full")
            continue
        try:
            rounds.append(int(item))
        except ValueError as exc:
            raise ConfigError("Invalid --rounds entry", details={"field": "rounds", "value": item}) from exc
    if not rounds:
        raise ConfigError("--rounds is empty", details={"field": "rounds"})
    return rounds


def run(args: argparse.Namespace) -> int:
    experiment = ExperimentConfig.from_file(args.config) if args.config else None
    spec = args.dataset or (experiment.dataset if experiment else None)
    if spec is None:
        raise ConfigError("bench needs --dataset or --config", details={"field": "dataset"})
    base = experiment.grid[0] if experiment else None
    normalize = experiment.normalize_features if experiment else True
    rate: Union[int, float] = float(args.label_rate) if "." in args.label_rate else int(args.label_rate)

    dataset = data_service.resolve(spec, normalize)
    rows = bench_service.run(dataset, parse_rounds(args.rounds), args.rule, base=base,
                             label_rate=rate, seed=args.seed or 0)

    with record_stream(args.out) as stream:
        write_records(stream, rows)
    table = table_stream(args)
    table.write(f"{'k':>5} {'K':>3} {'F-SpMM':>8} {'expected':>8} {'X-SpMM':>7} {'peak MB':>9} {'time s':>8} {'acc %':>6}\n")
    for row in rows:
        table.write(
            f"{row.rounds:>5} {row.layers:>3} {row.f_spmm:>8} {row.expected_f_spmm:>8} {row.x_spmm:>7} "
            f"{row.peak_memory_mb:>9.1f} {row.wall_time:>8.3f} {100 * row.test_accuracy:>6.2f}\n"
        )
    table.flush()

    mismatched = [row.rounds for row in rows if not row.counts_match]
    if mismatched:
        raise OracleFailure("SpMM counts differ from k·K·rule cost", details={"rounds": mismatched})
    return 0
