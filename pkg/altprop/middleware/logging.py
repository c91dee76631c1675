"""
Run logging middleware.
"""

import logging
import time
from typing import Any, Callable, Dict, Optional, TypeVar
from uuid import uuid4

logger = logging.getLogger(__name__)

T = TypeVar("T")


def configure_logging(level: str = "INFO", fmt: Optional[str] = None) -> None:
    """Configure the root logger once for CLI runs."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=fmt or "%(asctime)s | %(levelname)s | %(name)s | %(message)s",
        force=True
    )


class RunLoggingMiddleware:
    """Middleware for logging every training task."""

    def dispatch(
        self,
        task: Dict[str, Any],
        call_next: Callable[[Dict[str, Any]], T]
    ) -> T:
        # Generate run ID
        run_id = str(uuid4())
        task["run_id"] = run_id

        start_time = time.perf_counter()

        logger.info(
            f"Run started | "
            f"ID: {run_id} | "
            f"Method: {task.get('method', 'altopt')} | "
            f"Dataset: {task.get('dataset', 'unknown')} | "
            f"Split seed: {task.get('split_seed', '-')} | "
            f"Repeat: {task.get('repeat', '-')}"
        )

        try:
            result = call_next(task)
        except Exception as exc:
            duration = time.perf_counter() - start_time
            logger.warning(
                f"Run failed | "
                f"ID: {run_id} | "
                f"Error: {exc} | "
                f"Duration: {duration:.3f}s"
            )
            raise

        duration = time.perf_counter() - start_time

        logger.info(
            f"Run completed | "
            f"ID: {run_id} | "
            f"Status: ok | "
            f"Duration: {duration:.3f}s"
        )

        # Attach run ID to the record
        if hasattr(result, "run_id"):
            setattr(result, "run_id", run_id)

        return result


run_logging = RunLoggingMiddleware()
