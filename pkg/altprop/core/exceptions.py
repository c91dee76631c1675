"""
Custom exceptions and the exception handler for the CLI.
"""

import json
import sys
from typing import Any, Dict, Optional, TextIO

EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3
EXIT_ORACLE = 4


class AltPropException(Exception):
    """Base exception for altprop."""

    def __init__(
        self,
        message: str,
        exit_code: int = EXIT_NUMERICAL,
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(message)


class ConfigError(AltPropException):
    """Raised when an experiment or train config fails validation."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, exit_code=EXIT_CONFIG, details=details)


class DataError(AltPropException):
    """Raised when input files or graph data are malformed."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, exit_code=EXIT_DATA, details=details)


class NumericalError(AltPropException):
    """Raised when training diverges (NaN/inf loss or pseudo labels)."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, exit_code=EXIT_NUMERICAL, details=details)


class ContractViolation(AltPropException, ValueError):
    """Raised when a numeric routine is called outside its preconditions."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, exit_code=EXIT_NUMERICAL, details=details)


class OracleFailure(AltPropException):
    """Raised when one or more verification oracles fail."""

    def __init__(self, message: str = "Oracle suite failed", details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, exit_code=EXIT_ORACLE, details=details)


def error_payload(exc: AltPropException) -> Dict[str, Any]:
    """Uniform error body shared by every command."""
    return {
        "error": {
            "message": exc.message,
            "exit_code": exc.exit_code,
            "details": exc.details
        }
    }


def exception_handler(exc: AltPropException, stream: Optional[TextIO] = None) -> int:
    """Global handler for AltPropException: report and return the exit code."""
    stream = stream or sys.stderr
    stream.write(json.dumps(error_payload(exc), default=str) + "\n")
    return exc.exit_code
