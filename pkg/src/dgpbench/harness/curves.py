"""Datos de curvas (métrica frente a iteración y tiempo) para graficar fuera."""

import csv
from collections.abc import Iterable
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from ..exceptions import DatasetParseError
from ..exceptions import InvalidArgumentError
from ..interfaces import DiagnosticRecord
from ..observability.diagnostics import CHECKPOINT_STREAM

CURVE_COLUMNS = ("method", "iteration", "wall_clock_s", "metric_name", "value")


@dataclass(frozen=True)
class CurvePoint:
    method: str
    iteration: int
    wall_clock_s: float
    metric_name: str
    value: float


def curve_points(
    method: str, records: Iterable[DiagnosticRecord], stream: str = CHECKPOINT_STREAM
) -> list[CurvePoint]:
    """Una fila por métrica de cada registro del flujo indicado."""
    return [
        CurvePoint(
            method=method,
            iteration=record.iteration,
            wall_clock_s=record.wall_clock_s,
            metric_name=name,
            value=float(value),
        )
        for record in records
        if record.stream == stream
        for name, value in record.values.items()
    ]


def emit_curves(points: Sequence[CurvePoint], path: str | Path) -> Path:
    """
    Escribe ``points`` como CSV con cabecera ``method, iteration,
    wall_clock_s, metric_name, value``.

    Raises
    ------
    InvalidArgumentError
        Sin puntos, o ruta no escribible.
    """
    if not points:
        raise InvalidArgumentError(reason="no curve records to emit")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CURVE_COLUMNS)
            for p in points:
                writer.writerow(
                    [p.method, p.iteration, f"{p.wall_clock_s:.6f}", p.metric_name, repr(p.value)]
                )
    except OSError as e:
        raise InvalidArgumentError(reason=f"cannot write curves to {path}: {e}") from e
    return path


def read_curves(path: str | Path) -> list[CurvePoint]:
    """Lee un archivo escrito por ``emit_curves``."""
    path = Path(path)
    if not path.exists():
        raise InvalidArgumentError(reason=f"curves file not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
            raise DatasetParseError(reason=f"unexpected curve header in {path}")
        points = []
        for row_number, row in enumerate(reader, start=1):
            try:
                points.append(
                    CurvePoint(
                        method=row["method"],
                        iteration=int(row["iteration"]),
                        wall_clock_s=float(row["wall_clock_s"]),
                        metric_name=row["metric_name"],
                        value=float(row["value"]),
                    )
                )
            except (TypeError, ValueError) as e:
                raise DatasetParseError(reason=str(e), row=row_number) from e
    return points
