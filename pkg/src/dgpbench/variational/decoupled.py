"""Parametrización desacoplada: Z_a para la media y Z_b para la covarianza."""

import math
from dataclasses import dataclass
from enum import Enum

import torch

from ..exceptions import InvalidArgumentError
from ..gp.kernels import DEFAULT_JITTER
from ..gp.kernels import DTYPE
from ..gp.kernels import KernelParams
from ..gp.kernels import SolveMode
from ..gp.kernels import chol_psd
from ..gp.kernels import diag_gram
from ..gp.kernels import gram
from ..gp.kernels import tri_solve
from ..gp.layer import ConditionalMoments
from ..gp.layer import MeanFnSpec
from ..gp.layer import clamp_variance
from .coupled import lower_to_raw
from .coupled import raw_to_lower

# B inicial = INITIAL_B_PRECISION / σ_k² · I: covarianza de q casi nula.
INITIAL_B_PRECISION = 1e5


class MeanParameterization(Enum):
    """
    Cómo se interpreta ``mean_param``:

    - CB: μ = K_xZa·a
    - GP: μ = K_xZa K_ZaZa⁻¹ m
    - GPcent: μ = K_xZa L⁻ᵀ m′ con L·Lᵀ = K_ZaZa
    """

    CB = "CB"
    GP = "GP"
    GP_CENT = "GPcent"


@dataclass(frozen=True)
class DecoupledVarParams:
    Z_a: torch.Tensor
    Z_b: torch.Tensor
    mean_param: torch.Tensor
    B_chol: torch.Tensor

    def __post_init__(self) -> None:
        M_a, M_b = self.Z_a.shape[0], self.Z_b.shape[0]
        if self.Z_a.shape[1] != self.Z_b.shape[1]:
            raise InvalidArgumentError(reason="Z_a and Z_b must share the input dimension")
        if self.mean_param.dim() != 2 or self.mean_param.shape[0] != M_a:
            raise InvalidArgumentError(reason="mean_param must be M_a×D")
        if tuple(self.B_chol.shape) != (M_b, M_b):
            raise InvalidArgumentError(reason="B_chol must be M_b×M_b")

    @property
    def B(self) -> torch.Tensor:
        return self.B_chol @ self.B_chol.T

    @property
    def num_mean_inducing(self) -> int:
        return int(self.Z_a.shape[0])

    @property
    def num_cov_inducing(self) -> int:
        return int(self.Z_b.shape[0])

    @classmethod
    def initial(
        cls, Z_a: torch.Tensor, num_cov_inducing: int, kernel: KernelParams, output_dim: int
    ) -> "DecoupledVarParams":
        """Media nula, Z_b = primeras filas de Z_a y B grande."""
        if num_cov_inducing > Z_a.shape[0]:
            raise InvalidArgumentError(reason="M_b cannot exceed M_a")
        scale = math.sqrt(INITIAL_B_PRECISION / float(kernel.signal_variance.detach()))
        return cls(
            Z_a=Z_a.detach().clone(),
            Z_b=Z_a[:num_cov_inducing].detach().clone(),
            mean_param=torch.zeros(Z_a.shape[0], output_dim, dtype=DTYPE),
            B_chol=scale * torch.eye(num_cov_inducing, dtype=DTYPE),
        )

    def to_raw(self) -> list[torch.Tensor]:
        return [self.Z_a, self.Z_b, self.mean_param, lower_to_raw(self.B_chol)]

    def from_raw(self, raws: list[torch.Tensor]) -> "DecoupledVarParams":
        Z_a, Z_b, mean_param, b_raw = raws
        return DecoupledVarParams(
            Z_a=Z_a,
            Z_b=Z_b,
            mean_param=mean_param,
            B_chol=raw_to_lower(b_raw, self.num_cov_inducing),
        )

    def detach(self) -> "DecoupledVarParams":
        return DecoupledVarParams(
            Z_a=self.Z_a.detach().clone(),
            Z_b=self.Z_b.detach().clone(),
            mean_param=self.mean_param.detach().clone(),
            B_chol=self.B_chol.detach().clone(),
        )


def _covariance_system(
    dec: DecoupledVarParams, kernel: KernelParams, jitter: float
) -> tuple[torch.Tensor, torch.Tensor]:
    """K_ZbZb y el factor de R = I + B_cholᵀ K_ZbZb B_chol."""
    K_bb = gram(dec.Z_b, dec.Z_b, kernel)
    R = torch.eye(dec.num_cov_inducing, dtype=DTYPE) + dec.B_chol.T @ K_bb @ dec.B_chol
    R = 0.5 * (R + R.T)
    return K_bb, chol_psd(R, base_jitter=jitter).lower


def decoupled_mean(
    X: torch.Tensor,
    dec: DecoupledVarParams,
    kernel: KernelParams,
    param_kind: MeanParameterization | str = MeanParameterization.GP,
    jitter: float = DEFAULT_JITTER,
) -> torch.Tensor:
    param_kind = MeanParameterization(param_kind)
    K_xa = gram(X, dec.Z_a, kernel)
    if param_kind is MeanParameterization.CB:
        return K_xa @ dec.mean_param
    factor = chol_psd(gram(dec.Z_a, dec.Z_a, kernel), base_jitter=jitter)
    if param_kind is MeanParameterization.GP:
        return K_xa @ tri_solve(factor, dec.mean_param, SolveMode.FULL_INVERSE_APPLY)
    return K_xa @ tri_solve(factor, dec.mean_param, SolveMode.BACKWARD)


def decoupled_marginal(
    X: torch.Tensor,
    dec: DecoupledVarParams,
    kernel: KernelParams,
    param_kind: MeanParameterization | str = MeanParameterization.GP,
    mean_fn: MeanFnSpec | None = None,
    jitter: float = DEFAULT_JITTER,
) -> ConditionalMoments:
    """
    Momentos marginales de la posterior desacoplada.

    La covarianza es K_xx − K_xZb (B⁻¹ + K_ZbZb)⁻¹ K_Zbx, evaluada como
    ‖L_R⁻¹ B_cholᵀ K_Zbx‖² por columna sin invertir B.
    """
    mean = decoupled_mean(X, dec, kernel, param_kind, jitter)
    if mean_fn is not None:
        mean = mean + mean_fn.apply(X)

    _, L_R = _covariance_system(dec, kernel, jitter)
    W = torch.linalg.solve_triangular(L_R, dec.B_chol.T @ gram(dec.Z_b, X, kernel), upper=False)
    var = diag_gram(X, kernel) - (W * W).sum(dim=0)
    var = clamp_variance(var, kernel.signal_variance)
    return ConditionalMoments(mean=mean, var_diag=var.unsqueeze(1).expand_as(mean))


def kl_decoupled(
    dec: DecoupledVarParams,
    kernel: KernelParams,
    param_kind: MeanParameterization | str = MeanParameterization.GP,
    jitter: float = DEFAULT_JITTER,
) -> torch.Tensor:
    """
    KL de la posterior desacoplada con la constante que la anula en el
    límite sin información (a = 0, B → 0).

    Término de media: ½aᵀK_ZaZa a (CB), ½mᵀK_ZaZa⁻¹m (GP) o ½m′ᵀm′ (GPcent).
    Término de covarianza por columna: ½ log|R| − ½(M_b − tr R⁻¹), que es
    ½ log|I + K_ZbZb B| − ½ tr(K_ZbZb (B⁻¹ + K_ZbZb)⁻¹).

    Examples
    --------
    >>> one = torch.ones(1, 1, dtype=torch.float64)
    >>> dec = DecoupledVarParams(Z_a=one, Z_b=one, mean_param=one, B_chol=one)
    >>> round(float(kl_decoupled(dec, KernelParams.create([1.0]), "CB", jitter=0.0)), 5)
    0.59657
    """
    param_kind = MeanParameterization(param_kind)
    P = dec.mean_param
    if param_kind is MeanParameterization.GP_CENT:
        mean_term = 0.5 * (P * P).sum()
    elif param_kind is MeanParameterization.CB:
        mean_term = 0.5 * (P * (gram(dec.Z_a, dec.Z_a, kernel) @ P)).sum()
    else:
        factor = chol_psd(gram(dec.Z_a, dec.Z_a, kernel), base_jitter=jitter)
        alpha = tri_solve(factor, P, SolveMode.FORWARD)
        mean_term = 0.5 * (alpha * alpha).sum()

    _, L_R = _covariance_system(dec, kernel, jitter)
    eye = torch.eye(dec.num_cov_inducing, dtype=DTYPE)
    L_R_inv = torch.linalg.solve_triangular(L_R, eye, upper=False)
    trace_R_inv = (L_R_inv * L_R_inv).sum()
    log_det_R = 2.0 * torch.log(torch.diagonal(L_R)).sum()
    cov_term = 0.5 * (log_det_R - (dec.num_cov_inducing - trace_R_inv))
    return mean_term + P.shape[1] * cov_term
