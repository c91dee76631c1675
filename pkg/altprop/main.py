"""
altprop command-line entry point.
"""

import logging
import sys
from typing import List, Optional

from altprop.cli.router import build_parser
from altprop.core.config import settings
from altprop.core.exceptions import AltPropException, exception_handler
from altprop.middleware.logging import configure_logging

logger = logging.getLogger(__name__)


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the chosen verb and map failures to exit codes."""
    configure_logging(settings.log_level, settings.log_format)
    try:
        args = build_parser().parse_args(argv)
        logger.debug(f"Command started | Name: {args.command} | Version: {settings.app_version}")
        return args.handler(args)
    except AltPropException as exc:
        return exception_handler(exc)


if __name__ == "__main__":
    sys.exit(main())
