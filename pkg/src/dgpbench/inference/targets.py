"""Objetivos de muestreo: posterior de un DGP y gaussianas analíticas."""

import math

import torch

from ..exceptions import InvalidArgumentError
from ..gp.kernels import DTYPE
from ..gp.kernels import chol_psd
from ..gp.layer import inducing_factor
from ..gp.layer import standard_normal
from ..gp.model import DGPModel
from ..gp.model import FlatLatent
from ..gp.model import GradTarget
from ..gp.model import HyperVector
from ..gp.model import grad_log_joint
from ..interfaces import PosteriorTarget

# Escala de la posición inicial respecto de una muestra del prior.
INITIAL_PRIOR_SCALE = 1e-2


class DGPPosterior(PosteriorTarget):
    """
    Posterior p(u | y) de un DGP sobre un conjunto de entrenamiento.

    Cada evaluación usa un minibatch de ``minibatch_size`` filas extraído del
    mismo ``rng``; si el minibatch cubre todo el conjunto no se consume
    aleatoriedad para elegirlo.
    """

    def __init__(
        self, model: DGPModel, X: torch.Tensor, y: torch.Tensor, minibatch_size: int
    ) -> None:
        if X.shape[0] != y.shape[0]:
            raise InvalidArgumentError(reason="X and y must have the same number of rows")
        if minibatch_size < 1:
            raise InvalidArgumentError(reason="minibatch_size must be positive")
        self._model = model
        self.X = torch.as_tensor(X, dtype=DTYPE)
        self.y = torch.as_tensor(y, dtype=DTYPE)
        self.minibatch_size = minibatch_size

    @property
    def model(self) -> DGPModel:
        return self._model

    @property
    def num_data(self) -> int:
        return int(self.X.shape[0])

    def set_hyper(self, theta: HyperVector) -> None:
        self._model = self._model.with_hyper(theta.with_values(theta.values.detach().clone()))

    def batch(self, rng: torch.Generator) -> tuple[torch.Tensor, torch.Tensor]:
        if self.minibatch_size >= self.num_data:
            return self.X, self.y
        idx = torch.randperm(self.num_data, generator=rng)[: self.minibatch_size]
        return self.X[idx], self.y[idx]

    def initial_position(self, rng: torch.Generator) -> FlatLatent:
        us = []
        for layer in self._model.layers:
            factor = inducing_factor(layer, self._model.jitter)
            eps = standard_normal((layer.num_inducing, layer.output_dim), rng)
            us.append(INITIAL_PRIOR_SCALE * (factor.lower.detach() @ eps))
        return FlatLatent.pack(us)

    def potential_and_grad(
        self, u: FlatLatent, rng: torch.Generator
    ) -> tuple[torch.Tensor, float]:
        batch = self.batch(rng)
        result = grad_log_joint(u, batch, self._model, rng, wrt=GradTarget.LATENT)
        assert result.latent is not None
        return -result.latent, result.value

    def hyper_objective(
        self, theta: HyperVector, u: FlatLatent, rng: torch.Generator
    ) -> tuple[float, torch.Tensor]:
        """log p(y_b, u | θ) y su gradiente respecto de θ."""
        batch = self.batch(rng)
        model = self._model.with_hyper(theta)
        result = grad_log_joint(u, batch, model, rng, wrt=GradTarget.HYPERPARAMETERS)
        assert result.hyper is not None
        return result.value, result.hyper


class GaussianTarget(PosteriorTarget):
    """
    Gaussiana analítica N(mean, cov), opcionalmente replicada en
    ``num_chains`` bloques independientes que avanzan en paralelo.
    """

    def __init__(self, mean: torch.Tensor, cov: torch.Tensor, num_chains: int = 1) -> None:
        self.mean = torch.as_tensor(mean, dtype=DTYPE).reshape(-1)
        self.cov = torch.as_tensor(cov, dtype=DTYPE)
        d = self.mean.shape[0]
        if tuple(self.cov.shape) != (d, d):
            raise InvalidArgumentError(reason="cov must be a square matrix matching mean")
        if num_chains < 1:
            raise InvalidArgumentError(reason="num_chains must be positive")
        self.num_chains = num_chains
        self._factor = chol_psd(self.cov, base_jitter=0.0)
        self._precision = torch.cholesky_inverse(self._factor.lower)
        self._log_norm = -0.5 * (d * math.log(2 * math.pi) + float(self._factor.log_det()))

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    def chains(self, u: FlatLatent) -> torch.Tensor:
        """Posición por cadena, matriz (num_chains, dim)."""
        return u.values.reshape(self.num_chains, self.dim)

    def initial_position(self, rng: torch.Generator) -> FlatLatent:
        eps = standard_normal((self.num_chains, self.dim), rng)
        start = self.mean + INITIAL_PRIOR_SCALE * eps @ self._factor.lower.T
        return FlatLatent.pack([start.reshape(-1, 1)])

    def potential_and_grad(
        self, u: FlatLatent, rng: torch.Generator
    ) -> tuple[torch.Tensor, float]:
        diff = self.chains(u) - self.mean
        grad = diff @ self._precision
        log_density = self.num_chains * self._log_norm - 0.5 * float((diff * grad).sum())
        return grad.reshape(-1), log_density
