"""
`altprop convert`: turn a Planetoid-style export into the documented dataset files.

Recipe for the public Cora / CiteSeer / PubMed copies (LINQS tarballs):
    <name>.content   paper_id  f_1 ... f_d  class_label   (one paper per line)
    <name>.cites     cited_paper_id  citing_paper_id
    altprop convert --content cora/cora.content --cites cora/cora.cites --out data/cora

Chameleon / Squirrel exports with the same two-file layout convert the same way.
Class ids follow the sorted label names and are written to classes.txt.
"""

import argparse
import json
import sys
from typing import Any

from altprop.cli.deps import common_options
from altprop.core.exceptions import ConfigError
from altprop.services.data_service import data_service


def register(subparsers: Any) -> None:
    parser = subparsers.add_parser(
        "convert",
        parents=[common_options()],
        help="convert a Planetoid-style export",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("--content", required=True, help="<name>.content file")
    parser.add_argument("--cites", required=True, help="<name>.cites file")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    if not args.out:
        raise ConfigError("convert needs --out", details={"field": "out"})
    dataset = data_service.convert_planetoid(args.content, args.cites, args.out)
    sys.stdout.write(json.dumps({
        "record": "dataset",
        "path": args.out,
        "n": dataset.n,
        "edges": dataset.graph.n_edges,
        "d": dataset.d,
        "c": dataset.c
    }) + "\n")
    return 0
