"""
`altprop verify`: run the oracle suite; exit 4 if any check fails.
"""

import argparse
from typing import Any

from altprop.cli.deps import common_options, record_stream, write_records
from altprop.core.exceptions import OracleFailure
from altprop.services.verify_service import verify_service


def register(subparsers: Any) -> None:
    parser = subparsers.add_parser("verify", parents=[common_options()], help="run the oracle suite")
    parser.add_argument("--step-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    results = verify_service.run(seed=args.seed or 0, step_scale=args.step_scale)
    with record_stream(args.out) as stream:
        write_records(stream, results)

    failed = [result.name for result in results if not result.passed]
    if failed:
        raise OracleFailure(details={"failed": failed})
    return 0
