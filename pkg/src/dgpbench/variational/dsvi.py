"""
Inferencia variacional doblemente estocástica (DSVI) para DGPs.

La verosimilitud esperada de la última capa se calcula de forma analítica
dada una muestra propagada de las capas ocultas.
"""

import math
from collections.abc import Callable
from dataclasses import dataclass
from dataclasses import field

import torch

from ..exceptions import InvalidArgumentError
from ..gp.kernels import DTYPE
from ..gp.kernels import CholFactor
from ..gp.kernels import chol_psd
from ..gp.kernels import gram
from ..gp.layer import ConditionalMoments
from ..gp.layer import LayerState
from ..gp.layer import sample_layer
from ..gp.layer import standard_normal
from ..gp.model import DGPModel
from ..gp.model import FlatLatent
from ..gp.model import PredictiveMixture
from ..inference.mcem import OptimizerState
from ..inference.mcem import adaptive_step
from ..inference.sghmc import SampleWindow
from ..interfaces import DiagnosticsSink
from ..observability.diagnostics import DSVI_STREAM
from ..observability.diagnostics import NullDiagnosticsSink
from ..observability.diagnostics import Stopwatch
from ..observability.logging import get_logger
from .coupled import CoupledVarParams
from .coupled import kl_from_factors
from .coupled import variational_marginal
from .decoupled import DecoupledVarParams
from .decoupled import MeanParameterization
from .decoupled import decoupled_marginal
from .decoupled import kl_decoupled

logger = get_logger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)

LayerVarParams = CoupledVarParams | DecoupledVarParams


@dataclass(frozen=True)
class VariationalState:
    """Parámetros variacionales de todas las capas."""

    layers: tuple[LayerVarParams, ...]
    mean_parameterization: MeanParameterization = MeanParameterization.GP

    def __post_init__(self) -> None:
        kinds = {type(vp) for vp in self.layers}
        if len(kinds) > 1:
            raise InvalidArgumentError(reason="all layers must share the variational family")

    @property
    def decoupled(self) -> bool:
        return bool(self.layers) and isinstance(self.layers[0], DecoupledVarParams)

    def raw_values(self) -> tuple[torch.Tensor, list[tuple[int, ...]]]:
        raws = [r for vp in self.layers for r in vp.to_raw()]
        shapes = [tuple(r.shape) for r in raws]
        return torch.cat([r.reshape(-1) for r in raws]), shapes

    def with_raw_values(
        self, values: torch.Tensor, shapes: list[tuple[int, ...]]
    ) -> "VariationalState":
        chunks = []
        offset = 0
        for shape in shapes:
            size = math.prod(shape)
            chunks.append(values[offset : offset + size].reshape(shape))
            offset += size
        layers = []
        cursor = 0
        for vp in self.layers:
            n = len(vp.to_raw())
            layers.append(vp.from_raw(chunks[cursor : cursor + n]))
            cursor += n
        return VariationalState(tuple(layers), self.mean_parameterization)

    def detach(self) -> "VariationalState":
        return VariationalState(
            tuple(vp.detach() for vp in self.layers), self.mean_parameterization
        )


def init_variational_state(
    model: DGPModel,
    decoupled: bool = False,
    num_mean_inducing: int | None = None,
    num_cov_inducing: int | None = None,
    mean_parameterization: MeanParameterization | str = MeanParameterization.GP,
    training_inputs: torch.Tensor | None = None,
    rng: torch.Generator | None = None,
) -> VariationalState:
    """
    Estado inicial: m = 0 y S = 1e-5·K_ZZ en la forma acoplada; en la
    desacoplada Z_a se inicializa como Z del modelo (o con ``num_mean_inducing``
    filas propagadas desde ``training_inputs``) y Z_b con sus primeras filas.
    """
    layers: list[LayerVarParams] = []
    Z_a_all: list[torch.Tensor] = []
    if decoupled and num_mean_inducing is not None and training_inputs is not None:
        Z_a_all = _propagated_inducing(model, training_inputs, num_mean_inducing, rng)
    for i, layer in enumerate(model.layers):
        if not decoupled:
            layers.append(
                CoupledVarParams.initial(layer.Z, layer.kernel, layer.output_dim, model.jitter)
            )
            continue
        Z_a = Z_a_all[i] if Z_a_all else layer.Z
        M_b = num_cov_inducing if num_cov_inducing is not None else Z_a.shape[0]
        layers.append(DecoupledVarParams.initial(Z_a, M_b, layer.kernel, layer.output_dim))
    return VariationalState(tuple(layers), MeanParameterization(mean_parameterization))


def _propagated_inducing(
    model: DGPModel, X: torch.Tensor, count: int, rng: torch.Generator | None
) -> list[torch.Tensor]:
    N = X.shape[0]
    if count <= N:
        idx = torch.randperm(N, generator=rng)[:count]
    else:
        idx = torch.randint(0, N, (count,), generator=rng)
    Z = X[idx].to(DTYPE)
    out = []
    for layer in model.layers:
        out.append(Z.clone())
        Z = layer.mean_fn.apply(Z)
    return out


def layer_marginal(
    X: torch.Tensor,
    layer: LayerState,
    vp: LayerVarParams,
    mean_parameterization: MeanParameterization,
    jitter: float,
    factor: CholFactor | None = None,
) -> ConditionalMoments:
    if isinstance(vp, CoupledVarParams):
        return variational_marginal(
            X, layer.Z, vp.m, vp.S, layer.kernel, layer.mean_fn, jitter, factor
        )
    return decoupled_marginal(X, vp, layer.kernel, mean_parameterization, layer.mean_fn, jitter)


def layer_kl(
    layer: LayerState,
    vp: LayerVarParams,
    mean_parameterization: MeanParameterization,
    jitter: float,
    factor: CholFactor | None = None,
) -> torch.Tensor:
    if isinstance(vp, CoupledVarParams):
        if factor is None:
            factor = chol_psd(gram(layer.Z, layer.Z, layer.kernel), base_jitter=jitter)
        return kl_from_factors(vp.m, vp.S_chol, factor)
    return kl_decoupled(vp, layer.kernel, mean_parameterization, jitter)


def expected_gaussian_loglik(
    y: torch.Tensor, moments: ConditionalMoments, log_noise_variance: torch.Tensor
) -> torch.Tensor:
    """Σ E_{N(f; μ, var)}[log N(y; f, σ²)]."""
    noise = torch.exp(log_noise_variance)
    resid = y - moments.mean
    return (
        -0.5 * y.numel() * (_LOG_2PI + log_noise_variance)
        - 0.5 * ((resid * resid) + moments.var_diag).sum() / noise
    )


def _factors(model: DGPModel, state: VariationalState) -> list[CholFactor | None]:
    if state.decoupled:
        return [None] * model.num_layers
    return [
        chol_psd(gram(layer.Z, layer.Z, layer.kernel), base_jitter=model.jitter)
        for layer in model.layers
    ]


def elbo_terms(
    batch: tuple[torch.Tensor, torch.Tensor],
    model: DGPModel,
    state: VariationalState,
    rng: torch.Generator,
    num_samples: int = 1,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Verosimilitud esperada escalada y KL total."""
    X_b, y_b = batch
    if X_b.shape[0] == 0:
        raise InvalidArgumentError(reason="batch must be nonempty")
    if len(state.layers) != model.num_layers:
        raise InvalidArgumentError(reason="variational state does not match the model depth")
    factors = _factors(model, state)
    kind = state.mean_parameterization

    ell = torch.zeros((), dtype=DTYPE)
    for _ in range(num_samples):
        f = X_b
        for i, (layer, vp) in enumerate(zip(model.layers, state.layers, strict=True)):
            moments = layer_marginal(f, layer, vp, kind, model.jitter, factors[i])
            if i < model.num_layers - 1:
                f = sample_layer(moments, rng)
            else:
                ell = ell + expected_gaussian_loglik(y_b, moments, model.log_noise_variance)
    ell = ell / num_samples
    kl = sum(
        (
            layer_kl(layer, vp, kind, model.jitter, factors[i])
            for i, (layer, vp) in enumerate(zip(model.layers, state.layers, strict=True))
        ),
        torch.zeros((), dtype=DTYPE),
    )
    scale = model.num_data / X_b.shape[0]
    return scale * ell, kl


def elbo_estimate(
    batch: tuple[torch.Tensor, torch.Tensor],
    model: DGPModel,
    state: VariationalState,
    rng: torch.Generator,
    num_samples: int = 1,
) -> torch.Tensor:
    """
    ELBO estocástico: (N/|b|)·Σ E_q[log p(y | f_L)] − Σ_l KL_l, con las
    capas ocultas muestreadas ``num_samples`` veces.
    """
    ell, kl = elbo_terms(batch, model, state, rng, num_samples)
    return ell - kl


@dataclass(frozen=True)
class DSVIConfig:
    iterations: int = 20000
    learning_rate: float = 0.01
    minibatch_size: int = 10000
    num_samples: int = 1
    train_hyperparameters: bool = True


@dataclass
class DSVIHistory:
    elbo: list[float] = field(default_factory=list)
    kl: list[float] = field(default_factory=list)


def dsvi_train(
    data: tuple[torch.Tensor, torch.Tensor],
    model: DGPModel,
    state: VariationalState,
    config: DSVIConfig,
    rng: torch.Generator,
    sink: DiagnosticsSink | None = None,
    on_iteration: Callable[[int, DGPModel, VariationalState], None] | None = None,
) -> tuple[DGPModel, VariationalState, DSVIHistory]:
    """
    Asciende el ELBO en los parámetros variacionales y, si se pide, en los
    hiperparámetros, con un único paso adaptativo sobre el vector conjunto.

    Parameters
    ----------
    data : tuple[torch.Tensor, torch.Tensor]
        Conjunto de entrenamiento (X, y).
    model : DGPModel
        Modelo con los hiperparámetros iniciales.
    state : VariationalState
        Parámetros variacionales iniciales.
    config : DSVIConfig
        Iteraciones, tasa de aprendizaje, minibatch y muestras.
    rng : torch.Generator
        Flujo aleatorio para minibatches y propagación.
    sink : DiagnosticsSink, optional
        Destino de los registros ``dsvi`` (elbo, kl).
    on_iteration : callable, optional
        Se invoca tras cada iteración con el modelo y estado actuales.

    Returns
    -------
    tuple[DGPModel, VariationalState, DSVIHistory]
        Modelo, estado final e historial de ELBO y KL.
    """
    if config.iterations < 0:
        raise InvalidArgumentError(reason="iterations must be non-negative")
    X, y = data
    N = X.shape[0]
    sink = sink or NullDiagnosticsSink()
    history = DSVIHistory()

    var_values, shapes = state.raw_values()
    var_values = var_values.detach().clone()
    theta = model.hyper_vector()
    theta_values = theta.values.detach().clone()
    n_var = var_values.shape[0]
    size = n_var + (theta_values.shape[0] if config.train_hyperparameters else 0)
    opt = OptimizerState.create(size, config.learning_rate)

    clock = Stopwatch()
    logger.info(
        "dsvi training started",
        iterations=config.iterations,
        decoupled=state.decoupled,
        parameters=size,
    )
    for it in range(config.iterations):
        if config.minibatch_size >= N:
            batch = (X, y)
        else:
            idx = torch.randperm(N, generator=rng)[: config.minibatch_size]
            batch = (X[idx], y[idx])

        v = var_values.clone().requires_grad_(True)
        t = theta_values.clone().requires_grad_(config.train_hyperparameters)
        current_model = model.with_hyper(theta.with_values(t))
        current_state = state.with_raw_values(v, shapes)
        ell, kl = elbo_terms(batch, current_model, current_state, rng, config.num_samples)
        elbo = ell - kl

        inputs = [v, t] if config.train_hyperparameters else [v]
        grads = torch.autograd.grad(elbo, inputs, allow_unused=True)
        grad = torch.cat(
            [torch.zeros_like(x) if g is None else g for g, x in zip(grads, inputs, strict=True)]
        )
        update, opt = adaptive_step(opt, grad)
        var_values = (var_values + update[:n_var]).detach()
        if config.train_hyperparameters:
            theta_values = (theta_values + update[n_var:]).detach()

        history.elbo.append(float(elbo.detach()))
        history.kl.append(float(kl.detach()))
        sink.emit(
            clock.record(DSVI_STREAM, it, {"elbo": history.elbo[-1], "kl": history.kl[-1]})
        )
        if on_iteration is not None:
            on_iteration(
                it,
                model.with_hyper(theta.with_values(theta_values)),
                state.with_raw_values(var_values, shapes),
            )

    final_model = model.with_hyper(theta.with_values(theta_values)).detach()
    final_state = state.with_raw_values(var_values, shapes).detach()
    logger.info(
        "dsvi training finished",
        seconds=round(clock.elapsed(), 3),
        final_elbo=history.elbo[-1] if history.elbo else None,
    )
    return final_model, final_state, history


def predict_variational(
    X_star: torch.Tensor,
    model: DGPModel,
    state: VariationalState,
    rng: torch.Generator,
    num_samples: int = 100,
) -> PredictiveMixture:
    """Mezcla predictiva con una componente por propagación de las capas ocultas."""
    if num_samples < 1:
        raise InvalidArgumentError(reason="num_samples must be positive")
    kind = state.mean_parameterization
    means = []
    variances = []
    with torch.no_grad():
        factors = _factors(model, state)
        for _ in range(num_samples):
            f = X_star
            for i, (layer, vp) in enumerate(zip(model.layers, state.layers, strict=True)):
                moments = layer_marginal(f, layer, vp, kind, model.jitter, factors[i])
                if i < model.num_layers - 1:
                    f = sample_layer(moments, rng)
            means.append(moments.mean)
            variances.append(moments.var_diag + model.noise_variance)
    return PredictiveMixture(means=torch.stack(means), variances=torch.stack(variances))


def variational_window(
    state: VariationalState, model: DGPModel, n: int, rng: torch.Generator
) -> SampleWindow:
    """
    ``n`` extracciones de u ~ q(u) en las entradas inducidas del modelo, con el
    layout del muestreador para poder analizarlas igual que sus muestras.
    """
    if n < 1:
        raise InvalidArgumentError(reason="n must be positive")
    window = SampleWindow(n)
    kind = state.mean_parameterization
    with torch.no_grad():
        for _ in range(n):
            us = []
            for layer, vp in zip(model.layers, state.layers, strict=True):
                eps = standard_normal((layer.num_inducing, layer.output_dim), rng)
                if isinstance(vp, CoupledVarParams):
                    us.append(vp.m + vp.S_chol @ eps)
                else:
                    moments = decoupled_marginal(
                        layer.Z, vp, layer.kernel, kind, None, model.jitter
                    )
                    us.append(moments.mean + torch.sqrt(moments.var_diag) * eps)
            window.push(FlatLatent.pack(us))
    return window
