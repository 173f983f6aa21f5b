"""Sistema de logging estructurado para dgpbench."""

import logging
from dataclasses import dataclass
from dataclasses import field
from enum import Enum
from typing import Any

import structlog


class LogLevel(Enum):
    """Niveles de logging disponibles."""

    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"

    @classmethod
    def from_string(cls, level: str) -> "LogLevel":
        """
        Convierte un string a LogLevel.

        Raises
        ------
        ValueError
            Si el nivel no es válido.

        Examples
        --------
        >>> LogLevel.from_string("info")
        <LogLevel.INFO: 'INFO'>
        """
        level_upper = level.upper()
        for log_level in cls:
            if log_level.value == level_upper:
                return log_level
        raise ValueError(f"Invalid log level: {level}")


@dataclass
class LoggingConfig:
    """Configuración para el sistema de logging."""

    level: LogLevel = LogLevel.INFO
    format: str = "text"  # "json" o "text"
    extra_fields: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, config_dict: dict[str, Any]) -> "LoggingConfig":
        """
        Crea LoggingConfig desde un diccionario.

        Examples
        --------
        >>> LoggingConfig.from_dict({"level": "DEBUG", "format": "json"}).level
        <LogLevel.DEBUG: 'DEBUG'>
        """
        level = config_dict.get("level", LogLevel.INFO)
        if isinstance(level, str):
            level = LogLevel.from_string(level)
        fmt = config_dict.get("format", "text")
        if fmt not in ("json", "text"):
            raise ValueError(f"Invalid log format: {fmt}")
        return cls(level=level, format=fmt, extra_fields=dict(config_dict.get("extra_fields", {})))


class StructuredLogger:
    """Logger estructurado con campos fijos añadidos a cada evento."""

    def __init__(self, name: str, extra_fields: dict[str, Any] | None = None):
        self.name = name
        self._extra_fields = extra_fields or {}
        self._logger = structlog.get_logger(name)

    def _merge_fields(self, **kwargs: Any) -> dict[str, Any]:
        merged = self._extra_fields.copy()
        merged.update(kwargs)
        return merged

    def bind(self, **kwargs: Any) -> "StructuredLogger":
        """Devuelve un logger con campos adicionales fijados."""
        return StructuredLogger(self.name, self._merge_fields(**kwargs))

    def debug(self, message: str, **kwargs: Any) -> None:
        self._logger.debug(message, **self._merge_fields(**kwargs))

    def info(self, message: str, **kwargs: Any) -> None:
        """
        Log a nivel INFO.

        Examples
        --------
        >>> logger.info("burn-in finished", iterations=2000, seconds=12.5)
        """
        self._logger.info(message, **self._merge_fields(**kwargs))

    def warning(self, message: str, **kwargs: Any) -> None:
        self._logger.warning(message, **self._merge_fields(**kwargs))

    def error(self, message: str, /, **kwargs: Any) -> None:
        self._logger.error(message, **self._merge_fields(**kwargs))


class DGPLogging:
    """Sistema principal de logging de dgpbench."""

    def __init__(self, config: LoggingConfig):
        self.config = config
        self._configured = False

    @property
    def configured(self) -> bool:
        return self._configured

    def configure(self) -> None:
        """Configura structlog sobre el logging estándar (idempotente)."""
        if self._configured:
            return

        processors: list[Any] = [
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
        ]
        if self.config.format == "json":
            processors.append(structlog.processors.JSONRenderer())
        else:
            processors.append(structlog.dev.ConsoleRenderer(colors=False))

        structlog.configure(
            processors=processors,
            wrapper_class=structlog.stdlib.BoundLogger,
            logger_factory=structlog.stdlib.LoggerFactory(),
            cache_logger_on_first_use=False,
        )
        # basicConfig escribe en stderr
        logging.basicConfig(
            level=getattr(logging, self.config.level.value), format="%(message)s", force=True
        )
        self._configured = True

    def get_logger(self, name: str, extra_fields: dict[str, Any] | None = None) -> StructuredLogger:
        if not self._configured:
            self.configure()
        combined = self.config.extra_fields.copy()
        if extra_fields:
            combined.update(extra_fields)
        return StructuredLogger(name, combined)


def configure_logging(config: LoggingConfig) -> DGPLogging:
    """
    Configura el sistema de logging.

    Parameters
    ----------
    config : LoggingConfig
        Configuración del sistema de logging.

    Returns
    -------
    DGPLogging
        Instancia del sistema de logging configurado.

    Examples
    --------
    >>> logging_system = configure_logging(LoggingConfig(level=LogLevel.DEBUG, format="json"))
    """
    logging_system = DGPLogging(config)
    logging_system.configure()
    return logging_system


def get_logger(name: str, extra_fields: dict[str, Any] | None = None) -> StructuredLogger:
    """
    Obtiene un logger estructurado.

    Sin configuración previa structlog usa sus valores por defecto, de modo
    que la librería puede registrar eventos aunque el CLI no se haya usado.
    """
    return StructuredLogger(name, extra_fields)
