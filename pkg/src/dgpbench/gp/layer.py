"""Capa GP dispersa: condicional dado u, muestreo de salidas y función media."""

from dataclasses import dataclass
from dataclasses import replace
from enum import Enum

import torch

from ..exceptions import InvalidArgumentError
from ..exceptions import NumericalFailureError
from .kernels import DEFAULT_JITTER
from .kernels import DTYPE
from .kernels import CholFactor
from .kernels import KernelParams
from .kernels import SolveMode
from .kernels import chol_psd
from .kernels import diag_gram
from .kernels import gram
from .kernels import tri_solve

_ORTHONORMAL_TOLERANCE = 1e-8
_NEGATIVE_VARIANCE_TOLERANCE = 1e-10


class MeanFnKind(Enum):
    """Tipos de función media determinista."""

    ZERO = "zero"
    IDENTITY = "identity"
    PROJECTION = "projection"
    PADDED = "padded"


@dataclass(frozen=True)
class MeanFnSpec:
    """
    Función media determinista de una capa.

    ``projection`` usa una matriz D_in×D_out de columnas ortonormales;
    ``padded`` copia la entrada en las primeras D_in salidas y rellena con ceros.
    """

    kind: MeanFnKind
    input_dim: int
    output_dim: int
    projection_matrix: torch.Tensor | None = None

    def __post_init__(self) -> None:
        if self.kind is MeanFnKind.IDENTITY and self.input_dim != self.output_dim:
            raise InvalidArgumentError(reason="identity mean function requires D_in == D_out")
        if self.kind is MeanFnKind.PADDED and self.output_dim < self.input_dim:
            raise InvalidArgumentError(reason="padded mean function requires D_out >= D_in")
        if self.kind is MeanFnKind.PROJECTION:
            W = self.projection_matrix
            if W is None or tuple(W.shape) != (self.input_dim, self.output_dim):
                raise InvalidArgumentError(
                    reason=(
                        "projection matrix must have shape "
                        f"({self.input_dim}, {self.output_dim})"
                    )
                )
            gram_cols = W.T @ W
            eye = torch.eye(self.output_dim, dtype=DTYPE)
            if float((gram_cols - eye).abs().max()) > _ORTHONORMAL_TOLERANCE:
                raise InvalidArgumentError(reason="projection matrix columns are not orthonormal")

    @classmethod
    def zero(cls, input_dim: int, output_dim: int) -> "MeanFnSpec":
        return cls(MeanFnKind.ZERO, input_dim, output_dim)

    def apply(self, X: torch.Tensor) -> torch.Tensor:
        """Evalúa la función media sobre las filas de ``X``."""
        if self.kind is MeanFnKind.ZERO:
            return torch.zeros(X.shape[0], self.output_dim, dtype=DTYPE)
        if self.kind is MeanFnKind.IDENTITY:
            return X
        if self.kind is MeanFnKind.PADDED:
            padding = torch.zeros(X.shape[0], self.output_dim - self.input_dim, dtype=DTYPE)
            return torch.cat([X, padding], dim=1)
        assert self.projection_matrix is not None
        return X @ self.projection_matrix


@dataclass(frozen=True)
class LayerState:
    """
    Estado de una capa: entradas inducidas Z (M×D_in), salidas inducidas
    u (M×D_out), kernel compartido entre las D_out salidas y función media.
    """

    Z: torch.Tensor
    u: torch.Tensor
    kernel: KernelParams
    mean_fn: MeanFnSpec

    def __post_init__(self) -> None:
        if self.Z.dim() != 2 or self.u.dim() != 2:
            raise InvalidArgumentError(reason="Z and u must be matrices")
        if self.u.shape[0] != self.Z.shape[0]:
            raise InvalidArgumentError(
                reason=f"u has {self.u.shape[0]} rows but Z has {self.Z.shape[0]}"
            )
        if self.kernel.input_dim != self.Z.shape[1]:
            raise InvalidArgumentError(
                reason=f"kernel input dimension {self.kernel.input_dim} != D_in {self.Z.shape[1]}"
            )
        if self.mean_fn.input_dim != self.input_dim or self.mean_fn.output_dim != self.output_dim:
            raise InvalidArgumentError(reason="mean function dimensions do not match the layer")

    @property
    def num_inducing(self) -> int:
        return int(self.Z.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.Z.shape[1])

    @property
    def output_dim(self) -> int:
        return int(self.u.shape[1])

    def with_u(self, u: torch.Tensor) -> "LayerState":
        return replace(self, u=u)


@dataclass(frozen=True)
class ConditionalMoments:
    """Media (N×D_out) y varianzas marginales (N×D_out, replicadas por columna)."""

    mean: torch.Tensor
    var_diag: torch.Tensor


def inducing_factor(layer: LayerState, jitter: float = DEFAULT_JITTER) -> CholFactor:
    """Factor de Cholesky de ``K_ZZ`` de la capa."""
    return chol_psd(gram(layer.Z, layer.Z, layer.kernel), base_jitter=jitter)


def clamp_variance(var: torch.Tensor, signal_variance: torch.Tensor) -> torch.Tensor:
    """
    Recorta a 0 las varianzas negativas por redondeo; las negativas mayores
    que la tolerancia se consideran un fallo numérico.
    """
    tolerance = _NEGATIVE_VARIANCE_TOLERANCE * max(1.0, float(signal_variance.detach()))
    min_value = float(var.detach().min()) if var.numel() else 0.0
    if min_value < -tolerance:
        raise NumericalFailureError(reason=f"negative conditional variance {min_value:.3e}")
    return torch.clamp(var, min=0.0)


def conditional(
    X_in: torch.Tensor,
    layer: LayerState,
    jitter: float = DEFAULT_JITTER,
    factor: CholFactor | None = None,
) -> ConditionalMoments:
    """
    Momentos de p(f | u) en los puntos ``X_in``.

    μ = K_xZ K_ZZ⁻¹ u + m(x) y Σ = K_xx − K_xZ K_ZZ⁻¹ K_Zx, solo la diagonal.

    Parameters
    ----------
    X_in : torch.Tensor
        Entradas de la capa (N, D_in), ya en el espacio de entrada de la capa.
    layer : LayerState
        Estado de la capa.
    jitter : float
        Jitter relativo para ``K_ZZ``.
    factor : CholFactor, optional
        Factor de ``K_ZZ`` ya calculado.

    Returns
    -------
    ConditionalMoments
        Media y varianza marginal por punto.
    """
    if X_in.dim() != 2 or X_in.shape[1] != layer.input_dim:
        raise InvalidArgumentError(
            reason=f"X_in has shape {tuple(X_in.shape)}, expected (N, {layer.input_dim})"
        )
    if factor is None:
        factor = inducing_factor(layer, jitter)

    K_zx = gram(layer.Z, X_in, layer.kernel)
    A = tri_solve(factor, K_zx, SolveMode.FORWARD)
    beta = tri_solve(factor, layer.u, SolveMode.FORWARD)
    mean = A.T @ beta + layer.mean_fn.apply(X_in)

    var = diag_gram(X_in, layer.kernel) - (A * A).sum(dim=0)
    var = clamp_variance(var, layer.kernel.signal_variance)
    return ConditionalMoments(mean=mean, var_diag=var.unsqueeze(1).expand_as(mean))


def standard_normal(shape: tuple[int, ...], rng: torch.Generator) -> torch.Tensor:
    return torch.randn(shape, generator=rng, dtype=DTYPE)


def sample_layer(
    moments: ConditionalMoments, rng: torch.Generator, eps: torch.Tensor | None = None
) -> torch.Tensor:
    """
    Muestra ``mean + sqrt(var) ⊙ ε`` con ε normal estándar.

    La raíz se evalúa solo donde la varianza es positiva para que el gradiente
    no produzca NaN en las varianzas nulas.
    """
    if eps is None:
        eps = standard_normal(tuple(moments.mean.shape), rng)
    var = moments.var_diag
    positive = var > 0
    safe = torch.where(positive, var, torch.ones_like(var))
    std = torch.where(positive, torch.sqrt(safe), torch.zeros_like(var))
    return moments.mean + std * eps


def make_mean_fn(
    D_in: int,
    D_out: int,
    training_inputs: torch.Tensor | None = None,
    kind: MeanFnKind | str | None = None,
) -> MeanFnSpec:
    """
    Construye la función media de una capa.

    Sin ``kind`` explícito: identidad si D_in == D_out, proyección sobre los
    D_out vectores singulares derechos principales de las entradas centradas
    si D_out < D_in, y relleno con ceros si D_out > D_in.

    Examples
    --------
    >>> make_mean_fn(3, 3).kind
    <MeanFnKind.IDENTITY: 'identity'>
    """
    if kind is None:
        if D_in == D_out:
            kind = MeanFnKind.IDENTITY
        elif D_out < D_in:
            kind = MeanFnKind.PROJECTION
        else:
            kind = MeanFnKind.PADDED
    kind = MeanFnKind(kind)

    if kind is not MeanFnKind.PROJECTION:
        return MeanFnSpec(kind, D_in, D_out)

    if D_out > D_in:
        raise InvalidArgumentError(
            reason=f"cannot project {D_in} input dimensions onto {D_out} outputs"
        )
    if training_inputs is None or training_inputs.shape[0] == 0:
        raise InvalidArgumentError(reason="a projection mean function needs training inputs")
    X = torch.as_tensor(training_inputs, dtype=DTYPE).detach()
    centered = X - X.mean(dim=0, keepdim=True)
    _, _, Vh = torch.linalg.svd(centered, full_matrices=True)
    W = Vh[:D_out].T.contiguous()
    return MeanFnSpec(MeanFnKind.PROJECTION, D_in, D_out, projection_matrix=W)
