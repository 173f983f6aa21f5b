"""Interfaces y tipos base para dgpbench."""

from abc import ABC
from abc import abstractmethod
from collections.abc import Mapping
from dataclasses import dataclass
from dataclasses import field
from typing import TYPE_CHECKING
from typing import Any

import torch

if TYPE_CHECKING:
    from .gp.model import FlatLatent


@dataclass(frozen=True)
class DiagnosticRecord:
    """Registro de diagnóstico emitido por un bucle de inferencia."""

    stream: str
    iteration: int
    values: Mapping[str, float] = field(default_factory=dict)
    wall_clock_s: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "stream": self.stream,
            "iteration": self.iteration,
            "wall_clock_s": self.wall_clock_s,
            **{k: float(v) for k, v in self.values.items()},
        }


class DiagnosticsSink(ABC):
    """Interfaz base para los destinos de diagnósticos."""

    @abstractmethod
    def emit(self, record: DiagnosticRecord) -> None:
        """
        Recibe un registro.

        Args:
            record: El registro a almacenar o reenviar.
        """
        pass

    @abstractmethod
    def records(self, stream: str | None = None) -> list[DiagnosticRecord]:
        """
        Devuelve los registros retenidos.

        Args:
            stream: Si se indica, solo los registros de ese flujo.

        Returns:
            Lista de registros en orden de emisión.
        """
        pass


class PosteriorTarget(ABC):
    """
    Distribución objetivo de un muestreador por gradiente estocástico.

    ``potential_and_grad`` devuelve ∇U(u) = −∇ log p(u, y) y la estimación
    de log p(u, y) que lo produjo.
    """

    @abstractmethod
    def initial_position(self, rng: torch.Generator) -> "FlatLatent":
        pass

    @abstractmethod
    def potential_and_grad(
        self, u: "FlatLatent", rng: torch.Generator
    ) -> tuple[torch.Tensor, float]:
        pass

    @property
    def model(self) -> Any:
        """Modelo asociado (``None`` para objetivos analíticos)."""
        return None


class HyperStepper(ABC):
    """Paso de hiperparámetros intercalado con cada iteración del muestreador."""

    @abstractmethod
    def after_step(
        self, iteration: int, u: "FlatLatent", target: PosteriorTarget, rng: torch.Generator
    ) -> None:
        """
        Se invoca tras cada paso del muestreador durante el burn-in.

        Args:
            iteration: Índice de la iteración (desde 0).
            u: Posición actual de la cadena.
            target: Objetivo cuyos hiperparámetros pueden actualizarse.
            rng: Flujo aleatorio de la cadena.
        """
        pass
