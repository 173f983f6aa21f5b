"""Modelo DGP: densidad conjunta estocástica, gradientes y mezclas predictivas."""

import math
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import replace
from enum import Enum

import torch

from ..exceptions import InvalidArgumentError
from ..exceptions import InvalidStateError
from .kernels import DEFAULT_JITTER
from .kernels import DTYPE
from .kernels import CholFactor
from .kernels import KernelParams
from .kernels import SolveMode
from .kernels import chol_psd
from .kernels import gram
from .kernels import tri_solve
from .layer import LayerState
from .layer import MeanFnKind
from .layer import MeanFnSpec
from .layer import conditional
from .layer import inducing_factor
from .layer import make_mean_fn
from .layer import sample_layer

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LatentBlock:
    """Registro de layout de un bloque u_l dentro del vector plano."""

    layer: int
    num_inducing: int
    output_dim: int

    @property
    def size(self) -> int:
        return self.num_inducing * self.output_dim


@dataclass(frozen=True)
class FlatLatent:
    """
    Vector plano con todas las salidas inducidas u_l, capa a capa y cada
    matriz en orden de filas.
    """

    values: torch.Tensor
    layout: tuple[LatentBlock, ...]

    @classmethod
    def pack(cls, us: Sequence[torch.Tensor]) -> "FlatLatent":
        layout = tuple(
            LatentBlock(layer=i, num_inducing=int(u.shape[0]), output_dim=int(u.shape[1]))
            for i, u in enumerate(us)
        )
        values = torch.cat([u.reshape(-1) for u in us]) if us else torch.zeros(0, dtype=DTYPE)
        return cls(values=values, layout=layout)

    def unpack(self) -> list[torch.Tensor]:
        out = []
        offset = 0
        for block in self.layout:
            chunk = self.values[offset : offset + block.size]
            out.append(chunk.reshape(block.num_inducing, block.output_dim))
            offset += block.size
        if offset != self.values.shape[0]:
            raise InvalidArgumentError(
                reason=f"latent vector has {self.values.shape[0]} entries, layout expects {offset}"
            )
        return out

    @property
    def size(self) -> int:
        return int(self.values.shape[0])

    def with_values(self, values: torch.Tensor) -> "FlatLatent":
        return FlatLatent(values=values, layout=self.layout)

    def detach(self) -> "FlatLatent":
        return FlatLatent(values=self.values.detach().clone(), layout=self.layout)


@dataclass(frozen=True)
class HyperBlock:
    """Registro de layout de un bloque de hiperparámetros."""

    name: str
    layer: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return math.prod(self.shape)


@dataclass(frozen=True)
class HyperVector:
    """
    Vector plano con θ: por capa log-longitudes de escala, log-varianza de la
    señal y entradas inducidas Z; al final la log-varianza del ruido.
    """

    values: torch.Tensor
    layout: tuple[HyperBlock, ...]

    @property
    def size(self) -> int:
        return int(self.values.shape[0])

    def with_values(self, values: torch.Tensor) -> "HyperVector":
        return HyperVector(values=values, layout=self.layout)

    def blocks(self) -> list[tuple[HyperBlock, torch.Tensor]]:
        out = []
        offset = 0
        for block in self.layout:
            chunk = self.values[offset : offset + block.size].reshape(block.shape)
            out.append((block, chunk))
            offset += block.size
        return out


class GradTarget(Enum):
    """Respecto de qué se deriva la densidad conjunta."""

    LATENT = "latent"
    HYPERPARAMETERS = "hyperparameters"
    BOTH = "both"


@dataclass(frozen=True)
class LogJointGradient:
    value: float
    latent: torch.Tensor | None
    hyper: torch.Tensor | None


@dataclass(frozen=True)
class DGPModel:
    """
    DGP de L capas con verosimilitud gaussiana.

    ``num_data`` es el tamaño total del conjunto usado para escalar la
    verosimilitud de un minibatch.
    """

    layers: tuple[LayerState, ...]
    log_noise_variance: torch.Tensor
    num_data: int
    jitter: float = DEFAULT_JITTER

    def __post_init__(self) -> None:
        if not self.layers:
            raise InvalidArgumentError(reason="a DGP needs at least one layer")
        for i in range(1, len(self.layers)):
            if self.layers[i - 1].output_dim != self.layers[i].input_dim:
                raise InvalidArgumentError(
                    reason=(
                        f"layer {i - 1} outputs {self.layers[i - 1].output_dim} dimensions "
                        f"but layer {i} expects {self.layers[i].input_dim}"
                    )
                )
        if self.num_data < 1:
            raise InvalidArgumentError(reason="num_data must be positive")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    @property
    def noise_variance(self) -> torch.Tensor:
        return torch.exp(self.log_noise_variance)

    def current_latent(self) -> FlatLatent:
        return FlatLatent.pack([layer.u for layer in self.layers])

    def bind(self, latent: FlatLatent) -> tuple[LayerState, ...]:
        us = latent.unpack()
        if len(us) != self.num_layers:
            raise InvalidArgumentError(reason="latent layout does not match the number of layers")
        bound = []
        for layer, u in zip(self.layers, us, strict=True):
            if tuple(u.shape) != tuple(layer.u.shape):
                raise InvalidArgumentError(reason="latent block shape does not match its layer")
            bound.append(layer.with_u(u))
        return tuple(bound)

    def with_latent(self, latent: FlatLatent) -> "DGPModel":
        return replace(self, layers=self.bind(latent))

    def hyper_vector(self) -> HyperVector:
        tensors = []
        layout = []
        for i, layer in enumerate(self.layers):
            tensors += [
                layer.kernel.log_lengthscales,
                layer.kernel.log_signal_variance.reshape(1),
                layer.Z.reshape(-1),
            ]
            layout += [
                HyperBlock("log_lengthscales", i, (layer.input_dim,)),
                HyperBlock("log_signal_variance", i, ()),
                HyperBlock("Z", i, (layer.num_inducing, layer.input_dim)),
            ]
        tensors.append(self.log_noise_variance.reshape(1))
        layout.append(HyperBlock("log_noise_variance", -1, ()))
        return HyperVector(values=torch.cat(tensors), layout=tuple(layout))

    def with_hyper(self, theta: HyperVector) -> "DGPModel":
        """Devuelve un modelo cuyos θ son vistas de ``theta`` (conserva el grafo)."""
        parts: dict[tuple[str, int], torch.Tensor] = {
            (block.name, block.layer): chunk for block, chunk in theta.blocks()
        }
        layers = []
        for i, layer in enumerate(self.layers):
            kernel = KernelParams(
                log_lengthscales=parts[("log_lengthscales", i)],
                log_signal_variance=parts[("log_signal_variance", i)],
            )
            layers.append(replace(layer, Z=parts[("Z", i)], kernel=kernel))
        return replace(
            self, layers=tuple(layers), log_noise_variance=parts[("log_noise_variance", -1)]
        )

    def detach(self) -> "DGPModel":
        layers = tuple(
            replace(
                layer,
                Z=layer.Z.detach().clone(),
                u=layer.u.detach().clone(),
                kernel=layer.kernel.detach(),
            )
            for layer in self.layers
        )
        return replace(
            self, layers=layers, log_noise_variance=self.log_noise_variance.detach().clone()
        )


@dataclass(frozen=True)
class PredictiveMixture:
    """Mezcla uniforme de gaussianas por punto, una componente por muestra."""

    means: torch.Tensor
    variances: torch.Tensor

    def __post_init__(self) -> None:
        if self.means.shape != self.variances.shape or self.means.dim() != 3:
            raise InvalidArgumentError(reason="mixture means/variances must share shape (S, N, P)")
        if bool((self.variances <= 0).any()):
            raise InvalidArgumentError(reason="mixture variances must be positive")

    @property
    def num_components(self) -> int:
        return int(self.means.shape[0])

    @property
    def components(self) -> list[tuple[torch.Tensor, torch.Tensor]]:
        return list(zip(self.means, self.variances, strict=True))

    @property
    def weights(self) -> torch.Tensor:
        return torch.full((self.num_components,), 1.0 / self.num_components, dtype=DTYPE)

    def mean(self) -> torch.Tensor:
        return self.means.mean(dim=0)

    def variance(self) -> torch.Tensor:
        """Varianza total de la mezcla por punto."""
        second = (self.variances + self.means**2).mean(dim=0)
        return second - self.mean() ** 2


def layer_factors(layers: Sequence[LayerState], jitter: float) -> list[CholFactor]:
    return [inducing_factor(layer, jitter) for layer in layers]


def propagate(
    X: torch.Tensor,
    latent: FlatLatent,
    model: DGPModel,
    rng: torch.Generator,
    num_layers: int | None = None,
) -> list[torch.Tensor]:
    """
    Propaga X por las capas muestreando f_l ~ p(f_l | u_l, f_{l−1}).

    Parameters
    ----------
    X : torch.Tensor
        Entradas (N, D).
    latent : FlatLatent
        Salidas inducidas de todas las capas.
    model : DGPModel
        Modelo.
    rng : torch.Generator
        Flujo aleatorio; la salida es determinista dada la semilla.
    num_layers : int, optional
        Número de capas a recorrer (por defecto todas).

    Returns
    -------
    list[torch.Tensor]
        Salidas f_1 … f_L de cada capa.
    """
    if X.dim() != 2 or X.shape[1] != model.input_dim:
        raise InvalidArgumentError(
            reason=f"X has shape {tuple(X.shape)}, expected (N, {model.input_dim})"
        )
    layers = model.bind(latent)
    depth = model.num_layers if num_layers is None else num_layers
    outputs = []
    f = X
    for layer in layers[:depth]:
        f = sample_layer(conditional(f, layer, model.jitter), rng)
        outputs.append(f)
    return outputs


def log_prior(latent: FlatLatent, model: DGPModel) -> torch.Tensor:
    """
    Σ_l log N(u_l; 0, K_{Z_l Z_l}) sumado sobre las columnas de salida,
    con sus constantes de normalización.
    """
    total = torch.zeros((), dtype=DTYPE)
    for layer in model.bind(latent):
        factor = inducing_factor(layer, model.jitter)
        alpha = tri_solve(factor, layer.u, SolveMode.FORWARD)
        M, D = layer.num_inducing, layer.output_dim
        total = total - 0.5 * (alpha * alpha).sum() - 0.5 * D * (M * _LOG_2PI + factor.log_det())
    return total


def gaussian_loglik(
    y: torch.Tensor, f: torch.Tensor, log_noise_variance: torch.Tensor
) -> torch.Tensor:
    """Σ log N(y; f, σ²) sobre todas las entradas."""
    if y.shape != f.shape:
        raise InvalidArgumentError(
            reason=f"y shape {tuple(y.shape)} != f shape {tuple(f.shape)}"
        )
    noise = torch.exp(log_noise_variance)
    residual = y - f
    n = y.numel()
    return -0.5 * n * (_LOG_2PI + log_noise_variance) - 0.5 * (residual * residual).sum() / noise


def log_joint_estimate(
    latent: FlatLatent,
    batch: tuple[torch.Tensor, torch.Tensor],
    model: DGPModel,
    rng: torch.Generator,
) -> torch.Tensor:
    """
    Estimación Monte Carlo de log p(u, y):
    (N/|batch|)·log p(y_b | f_L) + log p(u) con f propagado una vez.
    """
    X_b, y_b = batch
    if X_b.shape[0] == 0:
        raise InvalidArgumentError(reason="batch must be nonempty")
    f_L = propagate(X_b, latent, model, rng)[-1]
    scale = model.num_data / X_b.shape[0]
    return scale * gaussian_loglik(y_b, f_L, model.log_noise_variance) + log_prior(latent, model)


def grad_log_joint(
    latent: FlatLatent,
    batch: tuple[torch.Tensor, torch.Tensor],
    model: DGPModel,
    rng: torch.Generator,
    wrt: GradTarget | str = GradTarget.BOTH,
) -> LogJointGradient:
    """
    Gradiente por reparametrización de ``log_joint_estimate``.

    Los ruidos normales se extraen de ``rng`` exactamente igual que en la
    estimación, de modo que dos llamadas con la misma semilla derivan la
    misma función.
    """
    wrt = GradTarget(wrt)
    u = latent.values.detach().clone().requires_grad_(wrt is not GradTarget.HYPERPARAMETERS)
    theta_base = model.hyper_vector()
    theta = theta_base.values.detach().clone().requires_grad_(wrt is not GradTarget.LATENT)

    bound_model = model.with_hyper(theta_base.with_values(theta))
    value = log_joint_estimate(latent.with_values(u), batch, bound_model, rng)

    inputs = []
    if wrt is not GradTarget.HYPERPARAMETERS:
        inputs.append(u)
    if wrt is not GradTarget.LATENT:
        inputs.append(theta)
    grads = torch.autograd.grad(value, inputs, allow_unused=True)
    grads = tuple(
        torch.zeros_like(x) if g is None else g for g, x in zip(grads, inputs, strict=True)
    )

    latent_grad = grads[0] if wrt is not GradTarget.HYPERPARAMETERS else None
    hyper_grad = grads[-1] if wrt is not GradTarget.LATENT else None
    return LogJointGradient(value=float(value.detach()), latent=latent_grad, hyper=hyper_grad)


def predict_mixture(
    X_star: torch.Tensor,
    window: Sequence[FlatLatent],
    model: DGPModel,
    rng: torch.Generator,
) -> PredictiveMixture:
    """
    Mezcla predictiva: por cada muestra se propaga hasta la capa L−1 y la
    componente es la condicional de la última capa con σ² añadido.
    """
    if len(window) == 0:
        raise InvalidStateError(reason="cannot predict from an empty sample window")
    means = []
    variances = []
    with torch.no_grad():
        for sample in window:
            hidden = propagate(X_star, sample, model, rng, num_layers=model.num_layers - 1)
            f = hidden[-1] if hidden else X_star
            last = model.bind(sample)[-1]
            moments = conditional(f, last, model.jitter)
            means.append(moments.mean)
            variances.append(moments.var_diag + model.noise_variance)
    return PredictiveMixture(means=torch.stack(means), variances=torch.stack(variances))


def component_log_densities(mixture: PredictiveMixture, y_star: torch.Tensor) -> torch.Tensor:
    """log N(y; mean_s, var_s) sumado sobre columnas: matriz (S, N)."""
    if tuple(y_star.shape) != tuple(mixture.means.shape[1:]):
        raise InvalidArgumentError(
            reason=f"y_star shape {tuple(y_star.shape)} does not match mixture"
        )
    var = mixture.variances
    resid = y_star.unsqueeze(0) - mixture.means
    return (-0.5 * (_LOG_2PI + torch.log(var)) - 0.5 * resid * resid / var).sum(dim=2)


def mixture_mll(mixture: PredictiveMixture, y_star: torch.Tensor) -> float:
    """Media sobre puntos de log((1/S) Σ_s N(y; mean_s, var_s)) vía log-sum-exp."""
    log_dens = component_log_densities(mixture, y_star)
    per_point = torch.logsumexp(log_dens, dim=0) - math.log(mixture.num_components)
    return float(per_point.mean())


def exact_single_layer_log_joint(
    latent: FlatLatent, X: torch.Tensor, y: torch.Tensor, model: DGPModel
) -> float:
    """
    log p(u, y) exacto para L = 1 integrando f:
    N(y; K_xZ K_ZZ⁻¹ u, diag(Σ) + σ²) por punto más log p(u).
    """
    if model.num_layers != 1:
        raise InvalidArgumentError(reason="the exact log joint is only available for L = 1")
    with torch.no_grad():
        layer = model.bind(latent)[0]
        moments = conditional(X, layer, model.jitter)
        var = moments.var_diag + model.noise_variance
        resid = y - moments.mean
        loglik = (-0.5 * (_LOG_2PI + torch.log(var)) - 0.5 * resid * resid / var).sum()
        return float(loglik + log_prior(latent, model))


def exact_log_evidence(
    X: torch.Tensor,
    y: torch.Tensor,
    kernel: KernelParams,
    log_noise_variance: torch.Tensor,
    mean: torch.Tensor | None = None,
) -> float:
    """log N(y; m(X), K_XX + σ²I) de un GP completo, sumado sobre columnas."""
    with torch.no_grad():
        N, P = y.shape
        K = gram(X, X, kernel) + torch.exp(log_noise_variance) * torch.eye(N, dtype=DTYPE)
        factor = chol_psd(K, base_jitter=0.0)
        centered = y if mean is None else y - mean
        alpha = tri_solve(factor, centered, SolveMode.FORWARD)
        value = -0.5 * (alpha * alpha).sum() - 0.5 * P * (N * _LOG_2PI + factor.log_det())
        return float(value)


def init_dgp_model(
    X: torch.Tensor,
    output_dim: int,
    hidden_widths: Sequence[int],
    num_inducing: int,
    rng: torch.Generator,
    hidden_mean_function: str = "auto",
    noise_variance: float = 0.01,
    lengthscale: float = 1.0,
    signal_variance: float = 1.0,
    jitter: float = DEFAULT_JITTER,
) -> DGPModel:
    """
    Inicializa un DGP. Las entradas inducidas de cada capa son puntos de
    entrenamiento elegidos al azar y propagados por las funciones medias de
    las capas anteriores; la última capa usa media cero.
    """
    X = torch.as_tensor(X, dtype=DTYPE)
    N, D = X.shape
    if num_inducing < 1:
        raise InvalidArgumentError(reason="num_inducing must be positive")
    if num_inducing <= N:
        idx = torch.randperm(N, generator=rng)[:num_inducing]
    else:
        idx = torch.randint(0, N, (num_inducing,), generator=rng)

    dims = [D, *hidden_widths, output_dim]
    H = X
    Z = X[idx]
    layers = []
    for i in range(len(dims) - 1):
        d_in, d_out = dims[i], dims[i + 1]
        last = i == len(dims) - 2
        if last or hidden_mean_function == "zero":
            mean_fn = MeanFnSpec.zero(d_in, d_out)
        else:
            mean_fn = make_mean_fn(d_in, d_out, H)
        layers.append(
            LayerState(
                Z=Z.clone(),
                u=torch.zeros(num_inducing, d_out, dtype=DTYPE),
                kernel=KernelParams.create([lengthscale] * d_in, signal_variance),
                mean_fn=mean_fn,
            )
        )
        if mean_fn.kind is not MeanFnKind.ZERO:
            H = mean_fn.apply(H)
            Z = mean_fn.apply(Z)
        else:
            # sin media no hay imagen de Z; se dispersa como N(0, 1)
            H = torch.zeros(N, d_out, dtype=DTYPE)
            Z = torch.randn(num_inducing, d_out, generator=rng, dtype=DTYPE)

    return DGPModel(
        layers=tuple(layers),
        log_noise_variance=torch.log(torch.tensor(noise_variance, dtype=DTYPE)),
        num_data=N,
        jitter=jitter,
    )
