"""Carga de datos tabulares, particiones y normalización."""

import csv
import math
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from ..exceptions import DatasetParseError
from ..exceptions import InvalidArgumentError
from ..gp.kernels import DTYPE


@dataclass(frozen=True)
class Normalization:
    """Medias y desviaciones usadas para normalizar entradas y objetivos."""

    x_mean: torch.Tensor
    x_std: torch.Tensor
    y_mean: torch.Tensor
    y_std: torch.Tensor

    @classmethod
    def identity(cls, input_dim: int, output_dim: int) -> "Normalization":
        return cls(
            x_mean=torch.zeros(input_dim, dtype=DTYPE),
            x_std=torch.ones(input_dim, dtype=DTYPE),
            y_mean=torch.zeros(output_dim, dtype=DTYPE),
            y_std=torch.ones(output_dim, dtype=DTYPE),
        )

    @classmethod
    def fit(cls, X: torch.Tensor, y: torch.Tensor) -> "Normalization":
        """Momentos por columna; las columnas constantes conservan escala 1."""

        def std(t: torch.Tensor) -> torch.Tensor:
            s = t.std(dim=0, unbiased=False) if t.shape[0] > 1 else torch.ones(t.shape[1])
            return torch.where(s > 0, s, torch.ones_like(s)).to(DTYPE)

        return cls(x_mean=X.mean(dim=0), x_std=std(X), y_mean=y.mean(dim=0), y_std=std(y))

    def apply_x(self, X: torch.Tensor) -> torch.Tensor:
        return (X - self.x_mean) / self.x_std

    def apply_y(self, y: torch.Tensor) -> torch.Tensor:
        return (y - self.y_mean) / self.y_std

    def restore_y(self, y: torch.Tensor) -> torch.Tensor:
        return y * self.y_std + self.y_mean

    def restore_variance(self, var: torch.Tensor) -> torch.Tensor:
        return var * self.y_std**2


@dataclass(frozen=True)
class Dataset:
    """
    Tabla numérica separada en entradas X (N×D) y objetivos y (N×P).

    ``normalization`` es ``None`` mientras los datos están en unidades
    originales.
    """

    X: torch.Tensor
    y: torch.Tensor
    name: str = "dataset"
    feature_names: tuple[str, ...] = ()
    target_names: tuple[str, ...] = ()
    normalization: Normalization | None = None

    def __post_init__(self) -> None:
        if self.X.dim() != 2 or self.y.dim() != 2:
            raise InvalidArgumentError(reason="X and y must be matrices")
        if self.X.shape[0] != self.y.shape[0]:
            raise InvalidArgumentError(reason="X and y must have the same number of rows")

    @property
    def num_rows(self) -> int:
        return int(self.X.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.X.shape[1])

    @property
    def output_dim(self) -> int:
        return int(self.y.shape[1])

    def subset(self, rows: Sequence[int] | np.ndarray) -> "Dataset":
        idx = torch.as_tensor(np.asarray(rows, dtype=np.int64))
        return replace(self, X=self.X[idx], y=self.y[idx])


def load_csv(
    path: str | Path, target_columns: Sequence[str] = (), name: str | None = None
) -> Dataset:
    """
    Lee un CSV numérico con cabecera.

    Las columnas objetivo se eligen por nombre (por defecto la última); el
    resto son entradas. Las posiciones de error son 1-indexadas sobre las
    filas de datos.

    Raises
    ------
    DatasetParseError
        Celda no numérica o no finita, filas de distinta longitud, columna
        objetivo inexistente o archivo vacío.
    """
    path = Path(path)
    if not path.exists():
        raise InvalidArgumentError(reason=f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))

    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DatasetParseError(reason="file is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DatasetParseError(reason="file has a header but no data rows", row=1)

    targets = list(target_columns) or [header[-1]]
    for t in targets:
        if t not in header:
            raise DatasetParseError(reason=f"target column '{t}' not found in header")
    target_idx = [header.index(t) for t in targets]
    feature_idx = [i for i in range(len(header)) if i not in target_idx]
    if not feature_idx:
        raise DatasetParseError(reason="no feature columns remain after selecting targets")

    values = np.empty((len(body), len(header)), dtype=np.float64)
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DatasetParseError(
                reason=f"row has {len(row)} cells, header has {len(header)}",
                row=r,
                column=min(len(row), len(header)) + 1,
            )
        for c, cell in enumerate(row, start=1):
            try:
                value = float(cell)
            except ValueError:
                raise DatasetParseError(reason=f"non-numeric cell '{cell}'", row=r, column=c)
            if not math.isfinite(value):
                raise DatasetParseError(
                    reason=f"missing or non-finite cell '{cell}'", row=r, column=c
                )
            values[r - 1, c - 1] = value

    return Dataset(
        X=torch.as_tensor(values[:, feature_idx], dtype=DTYPE),
        y=torch.as_tensor(values[:, target_idx], dtype=DTYPE),
        name=name or path.stem,
        feature_names=tuple(header[i] for i in feature_idx),
        target_names=tuple(targets),
    )


def split(dataset: Dataset, fraction: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    """
    Partición aleatoria determinista: ``round(fraction·N)`` filas para
    entrenamiento y el resto para test.

    Examples
    --------
    >>> X = torch.zeros(10, 1, dtype=torch.float64)
    >>> train, test = split(Dataset(X, X), 0.8, seed=1)
    >>> (train.num_rows, test.num_rows)
    (8, 2)
    """
    if not 0.0 < fraction < 1.0:
        raise InvalidArgumentError(reason="fraction must lie in (0, 1)")
    n = dataset.num_rows
    n_train = int(round(fraction * n))
    if n_train == 0 or n_train == n:
        raise InvalidArgumentError(
            reason=f"split of {n} rows at fraction {fraction} leaves an empty side"
        )
    order = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(order[:n_train])), dataset.subset(np.sort(order[n_train:]))


def split_fixed(dataset: Dataset, test_rows: Sequence[int]) -> tuple[Dataset, Dataset]:
    """Partición fija con las filas de test indicadas (0-indexadas)."""
    n = dataset.num_rows
    test = sorted(set(int(r) for r in test_rows))
    if not test or test[0] < 0 or test[-1] >= n:
        raise InvalidArgumentError(reason="fixed test rows must be valid row indices")
    if len(test) == n:
        raise InvalidArgumentError(reason="fixed split leaves no training rows")
    test_set = set(test)
    train = [i for i in range(n) if i not in test_set]
    return dataset.subset(train), dataset.subset(test)


def normalize(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset]:
    """Normaliza ambas particiones con los momentos de entrenamiento."""
    norm = Normalization.fit(train.X, train.y)

    def apply(ds: Dataset) -> Dataset:
        return replace(ds, X=norm.apply_x(ds.X), y=norm.apply_y(ds.y), normalization=norm)

    return apply(train), apply(test)
