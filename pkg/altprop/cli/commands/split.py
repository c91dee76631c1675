"""
`altprop split`: materialize a train/validation/test split as a JSON record.
"""

import argparse
import json
from typing import Any

from altprop.cli.deps import common_options, record_stream
from altprop.core.exceptions import ConfigError
from altprop.services.data_service import data_service


def register(subparsers: Any) -> None:
    parser = subparsers.add_parser("split", parents=[common_options()], help="generate a data split")
    parser.add_argument("--dataset", required=True, help="dataset directory or sbm: spec")
    parser.add_argument("--label-rate", default="20", help="per-class count (20) or fraction (0.3 / 30%%)")
    parser.set_defaults(handler=run)


def parse_rate(value: str) -> Any:
    try:
        if value.endswith("%"):
            return float(value[:-1]) / 100.0
        return float(value) if "." in value else int(value)
    except ValueError as exc:
        raise ConfigError("Invalid label rate", details={"field": "label_rate", "value": value}) from exc


def run(args: argparse.Namespace) -> int:
    dataset = data_service.resolve(args.dataset)
    split = data_service.make_split(dataset, parse_rate(args.label_rate), args.seed or 0)
    with record_stream(args.out) as stream:
        stream.write(json.dumps({
            "record": "split",
            "dataset": dataset.name,
            "label_rate": split.label_rate,
            "seed": split.seed,
            "train_idx": split.train_idx.tolist(),
            "val_idx": split.val_idx.tolist(),
            "test_idx": split.test_idx.tolist(),
            "warnings": split.warnings
        }) + "\n")
    return 0
