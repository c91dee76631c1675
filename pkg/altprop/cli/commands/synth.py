"""
`altprop synth`: write a planted-partition dataset in the documented file formats.
"""

import argparse
import json
import sys
from typing import Any

from altprop.cli.deps import common_options
from altprop.core.exceptions import ConfigError
from altprop.services.data_service import data_service


def register(subparsers: Any) -> None:
    parser = subparsers.add_parser("synth", parents=[common_options()], help="generate an SBM dataset")
    parser.add_argument("--n", type=int, default=400)
    parser.add_argument("--c", type=int, default=4)
    parser.add_argument("--p-in", type=float, default=0.05)
    parser.add_argument("--p-out", type=float, default=0.005)
    parser.add_argument("--d", type=int, default=16, help="feature dimension")
    parser.add_argument("--noise", type=float, default=1.0, help="feature noise scale")
    parser.add_argument("--binary", action="store_true", help="write features.bin instead of text")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    if not args.out:
        raise ConfigError("synth needs --out", details={"field": "out"})
    dataset = data_service.generate_sbm(args.n, args.c, args.p_in, args.p_out,
                                        args.d, args.noise, args.seed or 0)
    directory = data_service.save_dataset(dataset, args.out, binary_features=args.binary)
    sys.stdout.write(json.dumps({
        "record": "dataset",
        "path": str(directory),
        "n": dataset.n,
        "edges": dataset.graph.n_edges,
        "d": dataset.d,
        "c": dataset.c
    }) + "\n")
    return 0
