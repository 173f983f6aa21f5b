"""Observabilidad de dgpbench: logging estructurado y diagnósticos."""

from .diagnostics import InMemoryDiagnosticsSink
from .diagnostics import LoggingDiagnosticsSink
from .diagnostics import NullDiagnosticsSink
from .diagnostics import Stopwatch
from .logging import DGPLogging
from .logging import LoggingConfig
from .logging import LogLevel
from .logging import StructuredLogger
from .logging import configure_logging
from .logging import get_logger

__all__ = [
    # Logging
    "DGPLogging",
    "LogLevel",
    "LoggingConfig",
    "StructuredLogger",
    "configure_logging",
    "get_logger",
    # Diagnósticos
    "InMemoryDiagnosticsSink",
    "LoggingDiagnosticsSink",
    "NullDiagnosticsSink",
    "Stopwatch",
]
