"""
CLI router that combines all command parsers.
"""

from altprop import __version__
from altprop.cli.commands import bench, convert, split, synth, train, verify
from altprop.cli.deps import CliParser


def build_parser() -> CliParser:
    parser = CliParser(
        prog="altprop",
        description="Alternating label propagation and MLP training for node classification."
    )
    parser.add_argument("--version", action="version", version=f"altprop {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    train.register(subparsers)
    bench.register(subparsers)
    verify.register(subparsers)
    synth.register(subparsers)
    split.register(subparsers)
    convert.register(subparsers)
    return parser
