"""
Shared CLI dependencies: common flags, effective settings and the record writer.
"""

import argparse
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Iterator, Optional, TextIO

from pydantic import BaseModel

from altprop.core.config import Settings, get_settings
from altprop.core.exceptions import ConfigError


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors become ConfigError (exit 1)."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(f"Invalid arguments: {message}", details={"usage": self.format_usage().strip()})


def common_options() -> argparse.ArgumentParser:
    """Flags every verb accepts."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="flat KEY=value experiment file")
    parent.add_argument("--seed", type=int, default=None, help="base seed")
    parent.add_argument("--deterministic", action="store_true", help="single worker, bit-identical runs")
    parent.add_argument("--out", default=None, help="output path (records file or directory)")
    return parent


def effective_settings(args: argparse.Namespace) -> Settings:
    settings = get_settings()
    if getattr(args, "deterministic", False):
        settings = settings.model_copy(update={"deterministic": True})
    return settings


@contextmanager
def record_stream(out: Optional[str]) -> Iterator[TextIO]:
    """Records go to --out when given, otherwise to stdout."""
    if out is None:
        yield sys.stdout
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        yield handle


def write_records(stream: TextIO, records: Iterable[BaseModel]) -> None:
    """Single writer: one JSON object per line."""
    for record in records:
        stream.write(record.model_dump_json() + "\n")
    stream.flush()


def table_stream(args: argparse.Namespace) -> TextIO:
    """Human-readable tables go to stdout unless stdout carries the records."""
    return sys.stdout if args.out else sys.stderr
