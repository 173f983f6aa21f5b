"""Posterior variacional acoplada q(u) = N(m, S) con S compartida entre columnas."""

import math
from dataclasses import dataclass

import torch

from ..exceptions import InvalidArgumentError
from ..gp.kernels import DEFAULT_JITTER
from ..gp.kernels import DTYPE
from ..gp.kernels import CholFactor
from ..gp.kernels import KernelParams
from ..gp.kernels import SolveMode
from ..gp.kernels import chol_psd
from ..gp.kernels import diag_gram
from ..gp.kernels import gram
from ..gp.kernels import tri_solve
from ..gp.layer import ConditionalMoments
from ..gp.layer import MeanFnSpec
from ..gp.layer import clamp_variance


def lower_to_raw(L: torch.Tensor) -> torch.Tensor:
    """Triangular inferior con diagonal positiva → [subdiagonal, log diagonal]."""
    n = L.shape[0]
    rows, cols = torch.tril_indices(n, n, offset=-1)
    diag = torch.diagonal(L)
    if bool((diag <= 0).any()):
        raise InvalidArgumentError(reason="triangular factor must have a positive diagonal")
    return torch.cat([L[rows, cols], torch.log(diag)])


def raw_to_lower(raw: torch.Tensor, n: int) -> torch.Tensor:
    """Inversa de ``lower_to_raw``; diferenciable."""
    if raw.shape[0] != n * (n + 1) // 2:
        raise InvalidArgumentError(reason=f"raw factor has {raw.shape[0]} entries for size {n}")
    rows, cols = torch.tril_indices(n, n, offset=-1)
    off = raw[: rows.shape[0]]
    log_diag = raw[rows.shape[0] :]
    L = torch.zeros(n, n, dtype=raw.dtype).index_put((rows, cols), off)
    return L + torch.diag(torch.exp(log_diag))


@dataclass(frozen=True)
class CoupledVarParams:
    """Media m (M×D) y factor S_chol (M×M) de una capa."""

    m: torch.Tensor
    S_chol: torch.Tensor

    def __post_init__(self) -> None:
        M = self.m.shape[0]
        if self.m.dim() != 2 or tuple(self.S_chol.shape) != (M, M):
            raise InvalidArgumentError(reason="m must be M×D and S_chol M×M")

    @property
    def S(self) -> torch.Tensor:
        return self.S_chol @ self.S_chol.T

    @property
    def num_inducing(self) -> int:
        return int(self.m.shape[0])

    @classmethod
    def initial(
        cls, Z: torch.Tensor, kernel: KernelParams, output_dim: int, jitter: float = DEFAULT_JITTER
    ) -> "CoupledVarParams":
        """m = 0 y S = 1e-5·K_ZZ."""
        factor = chol_psd(gram(Z, Z, kernel).detach(), base_jitter=jitter)
        return cls(
            m=torch.zeros(Z.shape[0], output_dim, dtype=DTYPE),
            S_chol=math.sqrt(1e-5) * factor.lower,
        )

    def to_raw(self) -> list[torch.Tensor]:
        return [self.m, lower_to_raw(self.S_chol)]

    def from_raw(self, raws: list[torch.Tensor]) -> "CoupledVarParams":
        m, s_raw = raws
        return CoupledVarParams(m=m, S_chol=raw_to_lower(s_raw, self.num_inducing))

    def detach(self) -> "CoupledVarParams":
        return CoupledVarParams(m=self.m.detach().clone(), S_chol=self.S_chol.detach().clone())


def _as_matrix(m: torch.Tensor) -> torch.Tensor:
    return m.unsqueeze(1) if m.dim() == 1 else m


def variational_marginal(
    X: torch.Tensor,
    Z: torch.Tensor,
    m: torch.Tensor,
    S: torch.Tensor,
    kernel: KernelParams,
    mean_fn: MeanFnSpec | None = None,
    jitter: float = DEFAULT_JITTER,
    factor: CholFactor | None = None,
) -> ConditionalMoments:
    """
    Marginal de q(f) = ∫ p(f | u) q(u) du en los puntos ``X``.

    μ = K_xZ K_ZZ⁻¹ m y Σ = K_xx − K_xZ K_ZZ⁻¹ (K_ZZ − S) K_ZZ⁻¹ K_Zx,
    solo la diagonal.

    Parameters
    ----------
    X : torch.Tensor
        Puntos (N, D_in).
    Z : torch.Tensor
        Entradas inducidas (M, D_in).
    m : torch.Tensor
        Media variacional (M, D) o (M,).
    S : torch.Tensor
        Covarianza variacional (M, M), común a las D columnas.
    kernel : KernelParams
        Kernel de la capa.
    mean_fn : MeanFnSpec, optional
        Función media que se suma a μ.

    Returns
    -------
    ConditionalMoments
        Media y varianzas marginales.
    """
    m = _as_matrix(m)
    M = Z.shape[0]
    if m.shape[0] != M or tuple(S.shape) != (M, M):
        raise InvalidArgumentError(reason="m and S must conform to Z")
    if factor is None:
        factor = chol_psd(gram(Z, Z, kernel), base_jitter=jitter)

    A = tri_solve(factor, gram(Z, X, kernel), SolveMode.FORWARD)
    mean = A.T @ tri_solve(factor, m, SolveMode.FORWARD)
    if mean_fn is not None:
        mean = mean + mean_fn.apply(X)

    # C = L⁻¹ S L⁻ᵀ
    C = tri_solve(factor, tri_solve(factor, S, SolveMode.FORWARD).T, SolveMode.FORWARD)
    var = diag_gram(X, kernel) - (A * A).sum(dim=0) + (A * (C @ A)).sum(dim=0)
    var = clamp_variance(var, kernel.signal_variance)
    return ConditionalMoments(mean=mean, var_diag=var.unsqueeze(1).expand_as(mean))


def kl_from_factors(m: torch.Tensor, S_chol: torch.Tensor, K_factor: CholFactor) -> torch.Tensor:
    """KL(N(m, S) ‖ N(0, K)) sumada sobre columnas, con S = S_chol·S_cholᵀ."""
    m = _as_matrix(m)
    M, D = m.shape
    alpha = tri_solve(K_factor, m, SolveMode.FORWARD)
    B = tri_solve(K_factor, S_chol, SolveMode.FORWARD)
    log_det_S = 2.0 * torch.log(torch.abs(torch.diagonal(S_chol))).sum()
    per_column = (B * B).sum() - M + K_factor.log_det() - log_det_S
    return 0.5 * ((alpha * alpha).sum() + D * per_column)


def kl_coupled(
    m: torch.Tensor, S: torch.Tensor, K_zz: torch.Tensor, jitter: float = 0.0
) -> torch.Tensor:
    """
    KL(q ‖ p) completa por columna de salida:
    ½(tr(K⁻¹S) + mᵀK⁻¹m − M + log det K − log det S).

    Examples
    --------
    >>> one = torch.ones(1, 1, dtype=torch.float64)
    >>> float(kl_coupled(one, one, one))
    0.5
    """
    K_factor = chol_psd(K_zz, base_jitter=jitter)
    S_factor = chol_psd(S, base_jitter=0.0)
    return kl_from_factors(m, S_factor.lower, K_factor)
