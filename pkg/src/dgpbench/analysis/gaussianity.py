"""Diagnósticos de gaussianidad de posteriores muestreadas."""

import csv
import io
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field

import numpy as np
import torch
from scipy import stats

from ..exceptions import DegenerateInputError
from ..exceptions import InvalidArgumentError
from ..exceptions import InvalidStateError
from ..inference.sghmc import SampleWindow

DEFAULT_ALPHA = 1e-5
DEFAULT_NUM_COORDS = 100
MIN_TEST_SAMPLES = 20
_ZERO_VARIANCE = 1e-300


def _as_array(samples: Sequence[float] | np.ndarray | torch.Tensor) -> np.ndarray:
    if isinstance(samples, torch.Tensor):
        samples = samples.detach().cpu().numpy()
    arr = np.asarray(samples, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(reason="samples must be finite")
    return arr


def kurtosis(samples: Sequence[float] | np.ndarray | torch.Tensor) -> float:
    """
    Curtosis μ₄/σ⁴ con momentos centrales poblacionales (3 para una normal).

    Examples
    --------
    >>> kurtosis([-1.0, 1.0, -1.0, 1.0])
    1.0
    """
    arr = _as_array(samples)
    if arr.size < 4:
        raise InvalidArgumentError(reason="kurtosis needs at least 4 samples")
    if float(np.var(arr)) <= _ZERO_VARIANCE:
        raise DegenerateInputError(reason="samples have zero variance")
    return float(stats.kurtosis(arr, fisher=False, bias=True))


def kurtosis_pvalue(samples: Sequence[float] | np.ndarray | torch.Tensor) -> float:
    """
    p-valor bilateral del test de curtosis (H₀: muestras gaussianas).

    La curtosis se transforma a una z aproximadamente normal con la
    corrección de Anscombe y Glynn para muestras pequeñas, vía
    ``scipy.stats.kurtosistest``.
    """
    arr = _as_array(samples)
    if arr.size < MIN_TEST_SAMPLES:
        raise InvalidArgumentError(
            reason=f"kurtosis test needs at least {MIN_TEST_SAMPLES} samples, got {arr.size}"
        )
    if float(np.var(arr)) <= _ZERO_VARIANCE:
        raise DegenerateInputError(reason="samples have zero variance")
    result = stats.kurtosistest(arr, alternative="two-sided")
    return float(np.clip(result.pvalue, 0.0, 1.0))


@dataclass(frozen=True)
class CoordinateTest:
    coordinate: int
    num_samples: int
    kurtosis: float
    p_value: float
    rejected: bool

    @property
    def direction(self) -> str:
        """``platykurtic`` (< 3), ``leptokurtic`` (> 3) o ``mesokurtic``."""
        if self.kurtosis < 3.0:
            return "platykurtic"
        if self.kurtosis > 3.0:
            return "leptokurtic"
        return "mesokurtic"


@dataclass(frozen=True)
class GaussianityReport:
    alpha: float
    tests: list[CoordinateTest] = field(default_factory=list)
    label: str = ""

    @property
    def num_coords(self) -> int:
        return len(self.tests)

    @property
    def corrected_threshold(self) -> float:
        """Umbral de Bonferroni α / número de coordenadas."""
        return self.alpha / self.num_coords if self.tests else self.alpha

    @property
    def rejections(self) -> list[CoordinateTest]:
        return [t for t in self.tests if t.rejected]

    def to_table(self, delimiter: str = ",") -> str:
        """Tabla delimitada: coordenada, curtosis, p-valor, rechazo y sentido."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, delimiter=delimiter, lineterminator="\n")
        writer.writerow(
            ["dataset", "coordinate", "num_samples", "kurtosis", "p_value", "rejected", "direction"]
        )
        for t in self.tests:
            writer.writerow(
                [
                    self.label,
                    t.coordinate,
                    t.num_samples,
                    f"{t.kurtosis:.10g}",
                    f"{t.p_value:.10g}",
                    int(t.rejected),
                    t.direction,
                ]
            )
        return buffer.getvalue()


def gaussianity_report(
    window: SampleWindow,
    n_coords: int = DEFAULT_NUM_COORDS,
    alpha: float = DEFAULT_ALPHA,
    rng: np.random.Generator | int | None = None,
    label: str = "",
) -> GaussianityReport:
    """
    Test de curtosis sobre ``n_coords`` salidas inducidas elegidas sin
    reemplazo, marcando p < α / n_coords.

    Parameters
    ----------
    window : SampleWindow
        Muestras de la posterior (al menos 20).
    n_coords : int
        Coordenadas a contrastar.
    alpha : float
        Umbral antes de la corrección de Bonferroni.
    rng : numpy.random.Generator | int, optional
        Generador o semilla de la selección.
    label : str
        Nombre del conjunto de datos para la tabla.

    Returns
    -------
    GaussianityReport
        Informe con un resultado por coordenada.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(reason="alpha must lie in (0, 1)")
    if n_coords < 0:
        raise InvalidArgumentError(reason="n_coords must be non-negative")
    if n_coords == 0:
        return GaussianityReport(alpha=alpha, label=label)
    if len(window) < MIN_TEST_SAMPLES:
        raise InvalidStateError(
            reason=f"gaussianity report needs at least {MIN_TEST_SAMPLES} samples"
        )
    matrix = window.as_matrix().detach().cpu().numpy()
    dim = matrix.shape[1]
    if n_coords > dim:
        raise InvalidArgumentError(
            reason=f"n_coords={n_coords} exceeds the latent dimension {dim}"
        )
    generator = np.random.default_rng(rng)
    coords = np.sort(generator.choice(dim, size=n_coords, replace=False))
    threshold = alpha / n_coords

    tests = []
    for c in coords:
        column = matrix[:, c]
        p = kurtosis_pvalue(column)
        tests.append(
            CoordinateTest(
                coordinate=int(c),
                num_samples=column.size,
                kurtosis=kurtosis(column),
                p_value=p,
                rejected=p < threshold,
            )
        )
    return GaussianityReport(alpha=alpha, tests=tests, label=label)


def bimodality_coverage(
    window: SampleWindow, reference_direction: torch.Tensor
) -> tuple[float, float]:
    """
    Fracción de muestras con proyección positiva y negativa sobre la
    dirección de referencia; las proyecciones exactamente nulas no cuentan.
    """
    if len(window) == 0:
        raise InvalidStateError(reason="sample window is empty")
    direction = torch.as_tensor(reference_direction, dtype=torch.float64).reshape(-1)
    if float(torch.linalg.vector_norm(direction)) == 0.0:
        raise InvalidArgumentError(reason="reference direction must be nonzero")
    samples = window.as_matrix()
    if samples.shape[1] != direction.shape[0]:
        raise InvalidArgumentError(reason="reference direction does not match the latent size")
    projections = samples @ direction
    n = projections.shape[0]
    return (
        float((projections > 0).sum()) / n,
        float((projections < 0).sum()) / n,
    )
