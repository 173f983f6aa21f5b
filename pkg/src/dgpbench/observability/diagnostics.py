"""Destinos de diagnósticos para los bucles de inferencia."""

import time
from collections import deque
from collections.abc import Mapping

from ..interfaces import DiagnosticRecord
from ..interfaces import DiagnosticsSink
from .logging import get_logger

SGHMC_STREAM = "sghmc"
MW_MCEM_STREAM = "mw_mcem"
MCEM_STREAM = "mcem"
DSVI_STREAM = "dsvi"
CHECKPOINT_STREAM = "checkpoint"


class InMemoryDiagnosticsSink(DiagnosticsSink):
    """Retiene los registros en memoria, opcionalmente solo los últimos ``max_records``."""

    def __init__(self, max_records: int | None = None) -> None:
        self._records: deque[DiagnosticRecord] = deque(maxlen=max_records)

    def emit(self, record: DiagnosticRecord) -> None:
        self._records.append(record)

    def records(self, stream: str | None = None) -> list[DiagnosticRecord]:
        if stream is None:
            return list(self._records)
        return [r for r in self._records if r.stream == stream]

    def clear(self) -> None:
        self._records.clear()

    def __len__(self) -> int:
        return len(self._records)


class LoggingDiagnosticsSink(DiagnosticsSink):
    """
    Reenvía uno de cada ``every`` registros a structlog a nivel DEBUG y los
    conserva también en un sink interno.
    """

    def __init__(self, every: int = 100, inner: DiagnosticsSink | None = None) -> None:
        if every < 1:
            raise ValueError("every must be >= 1")
        self.every = every
        self._inner = inner or InMemoryDiagnosticsSink()
        self._logger = get_logger(__name__)

    def emit(self, record: DiagnosticRecord) -> None:
        self._inner.emit(record)
        if record.iteration % self.every == 0:
            self._logger.debug("diagnostic", **record.to_dict())

    def records(self, stream: str | None = None) -> list[DiagnosticRecord]:
        return self._inner.records(stream)


class NullDiagnosticsSink(DiagnosticsSink):
    """Descarta todos los registros."""

    def emit(self, record: DiagnosticRecord) -> None:
        pass

    def records(self, stream: str | None = None) -> list[DiagnosticRecord]:
        return []


class Stopwatch:
    """Reloj de pared desde la creación, para sellar registros."""

    def __init__(self) -> None:
        self._start = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self._start

    def record(
        self, stream: str, iteration: int, values: Mapping[str, float]
    ) -> DiagnosticRecord:
        return DiagnosticRecord(
            stream=stream, iteration=iteration, values=dict(values), wall_clock_s=self.elapsed()
        )
