"""Funciones de covarianza SE-ARD y álgebra lineal semidefinida positiva."""

from dataclasses import dataclass
from enum import Enum

import torch

from ..exceptions import InvalidArgumentError
from ..exceptions import NumericalFailureError

DTYPE = torch.float64

# Jitter relativo a la media de la diagonal.
DEFAULT_JITTER = 1e-6
MAX_JITTER = 1e-2

_SYMMETRY_TOLERANCE = 1e-10
_FIRST_NONZERO_JITTER = 1e-12


@dataclass(frozen=True)
class KernelParams:
    """
    Hiperparámetros del kernel exponencial cuadrático con ARD.

    Se almacenan en espacio logarítmico para que un paso de gradiente nunca
    pueda producir longitudes de escala o varianzas no positivas.
    """

    log_lengthscales: torch.Tensor
    log_signal_variance: torch.Tensor

    @classmethod
    def create(
        cls, lengthscales: float | list[float] | torch.Tensor, signal_variance: float = 1.0
    ) -> "KernelParams":
        """
        Construye los parámetros a partir de valores positivos.

        Parameters
        ----------
        lengthscales : float | list[float] | torch.Tensor
            Longitudes de escala, una por dimensión de entrada.
        signal_variance : float
            Varianza de la señal σ_k².

        Returns
        -------
        KernelParams
            Parámetros en forma logarítmica.

        Examples
        --------
        >>> params = KernelParams.create([1.0, 2.0], signal_variance=2.5)
        >>> params.input_dim
        2
        """
        ls = torch.as_tensor(lengthscales, dtype=DTYPE).reshape(-1)
        if bool((ls <= 0).any()) or signal_variance <= 0:
            raise InvalidArgumentError(reason="lengthscales and signal variance must be positive")
        return cls(
            log_lengthscales=torch.log(ls),
            log_signal_variance=torch.log(torch.tensor(signal_variance, dtype=DTYPE)),
        )

    @property
    def input_dim(self) -> int:
        return int(self.log_lengthscales.shape[0])

    @property
    def lengthscales(self) -> torch.Tensor:
        return torch.exp(self.log_lengthscales)

    @property
    def signal_variance(self) -> torch.Tensor:
        return torch.exp(self.log_signal_variance)

    def detach(self) -> "KernelParams":
        return KernelParams(
            log_lengthscales=self.log_lengthscales.detach().clone(),
            log_signal_variance=self.log_signal_variance.detach().clone(),
        )


@dataclass(frozen=True)
class CholFactor:
    """Factor de Cholesky inferior de ``A + jitter_used·I``."""

    lower: torch.Tensor
    jitter_used: float

    @property
    def size(self) -> int:
        return int(self.lower.shape[0])

    def log_det(self) -> torch.Tensor:
        """Logaritmo del determinante de ``L·Lᵀ``."""
        return 2.0 * torch.log(torch.diagonal(self.lower)).sum()


class SolveMode(Enum):
    """Modos de resolución triangular."""

    FORWARD = "forward"
    BACKWARD = "backward"
    FULL_INVERSE_APPLY = "full-inverse-apply"


def _check_dims(points: torch.Tensor, params: KernelParams, name: str) -> None:
    if points.dim() != 2 or points.shape[1] != params.input_dim:
        raise InvalidArgumentError(
            reason=(
                f"{name} has shape {tuple(points.shape)}, "
                f"expected (n, {params.input_dim}) for this kernel"
            )
        )


def se_ard(x: torch.Tensor, x_prime: torch.Tensor, params: KernelParams) -> torch.Tensor:
    """
    Evalúa k(x, x′) = σ_k² · exp(−½ Σ_d (x_d − x′_d)² / ℓ_d²).

    Parameters
    ----------
    x, x_prime : torch.Tensor
        Puntos de dimensión igual al número de longitudes de escala.
    params : KernelParams
        Hiperparámetros del kernel.

    Returns
    -------
    torch.Tensor
        Escalar con la covarianza.

    Examples
    --------
    >>> params = KernelParams.create([1.0])
    >>> float(se_ard(torch.tensor([0.0]), torch.tensor([1.0]), params))  # doctest: +ELLIPSIS
    0.6065...
    """
    x = torch.as_tensor(x, dtype=DTYPE).reshape(-1)
    x_prime = torch.as_tensor(x_prime, dtype=DTYPE).reshape(-1)
    if x.shape[0] != params.input_dim or x_prime.shape[0] != params.input_dim:
        raise InvalidArgumentError(
            reason=f"points must have dimension {params.input_dim}, "
            f"got {x.shape[0]} and {x_prime.shape[0]}"
        )
    scaled = (x - x_prime) / params.lengthscales
    return params.signal_variance * torch.exp(-0.5 * (scaled * scaled).sum())


def gram(A: torch.Tensor, B: torch.Tensor, params: KernelParams) -> torch.Tensor:
    """
    Matriz de covarianzas ``K_AB`` con entradas ``se_ard(A_i, B_j)``.

    Parameters
    ----------
    A : torch.Tensor
        Conjunto de puntos (n, D).
    B : torch.Tensor
        Conjunto de puntos (m, D).
    params : KernelParams
        Hiperparámetros del kernel.

    Returns
    -------
    torch.Tensor
        Matriz (n, m).
    """
    _check_dims(A, params, "A")
    _check_dims(B, params, "B")
    a = A / params.lengthscales
    b = B / params.lengthscales
    sq_a = (a * a).sum(dim=1, keepdim=True)
    sq_b = (b * b).sum(dim=1, keepdim=True)
    sq_dist = torch.clamp(sq_a + sq_b.T - 2.0 * a @ b.T, min=0.0)
    K = params.signal_variance * torch.exp(-0.5 * sq_dist)
    if A is B:
        K = 0.5 * (K + K.T)
    return K


def diag_gram(A: torch.Tensor, params: KernelParams) -> torch.Tensor:
    """Diagonal de ``gram(A, A)``: σ_k² repetida."""
    _check_dims(A, params, "A")
    return params.signal_variance * torch.ones(A.shape[0], dtype=DTYPE)


def chol_psd(
    A: torch.Tensor, base_jitter: float = DEFAULT_JITTER, max_jitter: float = MAX_JITTER
) -> CholFactor:
    """
    Factoriza ``A + jitter·I`` aumentando el jitter geométricamente (×10).

    El jitter es relativo a la media de la diagonal de ``A``. Se empieza por
    ``base_jitter`` (si es 0 el primer intento no añade nada) y se multiplica
    por 10 hasta que la factorización tiene éxito o se supera ``max_jitter``.

    Parameters
    ----------
    A : torch.Tensor
        Matriz simétrica (M, M).
    base_jitter : float
        Jitter relativo inicial.
    max_jitter : float
        Techo del jitter relativo.

    Returns
    -------
    CholFactor
        Factor inferior y jitter absoluto utilizado.

    Raises
    ------
    InvalidArgumentError
        Si ``A`` no es cuadrada o no es simétrica.
    NumericalFailureError
        Si se supera el techo de jitter sin éxito.
    """
    if A.dim() != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(reason=f"expected a square matrix, got {tuple(A.shape)}")
    with torch.no_grad():
        scale = float(torch.linalg.matrix_norm(A))
        asym = float(torch.linalg.matrix_norm(A - A.T))
    if asym > _SYMMETRY_TOLERANCE * max(scale, 1.0):
        raise InvalidArgumentError(reason=f"matrix is not symmetric (asymmetry {asym:.3e})")

    size = A.shape[0]
    eye = torch.eye(size, dtype=A.dtype)
    mean_diag = float(torch.diagonal(A).detach().mean()) if size > 0 else 1.0
    mean_diag = abs(mean_diag) if mean_diag != 0.0 else 1.0

    relative = base_jitter
    last_jitter = base_jitter * mean_diag
    while relative <= max_jitter:
        jitter = relative * mean_diag
        last_jitter = jitter
        lower, info = torch.linalg.cholesky_ex(A + jitter * eye)
        if int(info) == 0 and bool(torch.isfinite(lower).all()):
            return CholFactor(lower=lower, jitter_used=jitter)
        relative = relative * 10.0 if relative > 0.0 else _FIRST_NONZERO_JITTER

    raise NumericalFailureError(
        reason="Cholesky factorization failed at the jitter ceiling",
        jitter=last_jitter,
    )


def tri_solve(
    factor: CholFactor, rhs: torch.Tensor, mode: SolveMode | str = SolveMode.FULL_INVERSE_APPLY
) -> torch.Tensor:
    """
    Resuelve sistemas con el factor de Cholesky.

    ``forward`` resuelve ``L·X = rhs``, ``backward`` resuelve ``Lᵀ·X = rhs`` y
    ``full-inverse-apply`` devuelve ``(L·Lᵀ)⁻¹·rhs``.
    """
    mode = SolveMode(mode)
    vector = rhs.dim() == 1
    matrix = rhs.unsqueeze(1) if vector else rhs
    if matrix.dim() != 2 or matrix.shape[0] != factor.size:
        raise InvalidArgumentError(
            reason=f"rhs shape {tuple(rhs.shape)} does not conform to factor of size {factor.size}"
        )

    L = factor.lower
    if mode is SolveMode.FORWARD:
        out = torch.linalg.solve_triangular(L, matrix, upper=False)
    elif mode is SolveMode.BACKWARD:
        out = torch.linalg.solve_triangular(L.T, matrix, upper=True)
    else:
        out = torch.cholesky_solve(matrix, L, upper=False)
    return out.squeeze(1) if vector else out
