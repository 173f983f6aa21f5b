"""Optimización de hiperparámetros durante el burn-in: Moving Window MCEM y MCEM."""

import math
from collections.abc import Callable
from dataclasses import dataclass
from dataclasses import replace
from typing import Protocol

import torch

from ..exceptions import InvalidArgumentError
from ..exceptions import InvalidStateError
from ..gp.kernels import DTYPE
from ..gp.model import FlatLatent
from ..gp.model import HyperVector
from ..interfaces import DiagnosticRecord
from ..interfaces import DiagnosticsSink
from ..interfaces import HyperStepper
from ..interfaces import PosteriorTarget
from ..observability.diagnostics import MCEM_STREAM
from ..observability.diagnostics import MW_MCEM_STREAM
from ..observability.diagnostics import SGHMC_STREAM
from ..observability.diagnostics import NullDiagnosticsSink
from ..observability.diagnostics import Stopwatch
from ..observability.logging import get_logger
from .sghmc import DEFAULT_DECAY
from .sghmc import DEFAULT_STEP_SIZE
from .sghmc import Integrator
from .sghmc import SamplerPhase
from .sghmc import SamplerState
from .sghmc import SampleWindow
from .sghmc import autotune_update
from .sghmc import sghmc_step

logger = get_logger(__name__)

DEFAULT_LEARNING_RATE = 0.01
DEFAULT_WINDOW_CAPACITY = 300

# (θ, u, rng) -> (log p(y, u | θ), ∇θ)
HyperObjective = Callable[[HyperVector, FlatLatent, torch.Generator], tuple[float, torch.Tensor]]
# (θ, m, rng) -> m muestras de p(u | y, θ)
PosteriorSampler = Callable[[HyperVector, int, torch.Generator], list[FlatLatent]]


class HyperTarget(Protocol):
    """Objetivo cuyos hiperparámetros pueden leerse, fijarse y derivarse."""

    def hyper_objective(
        self, theta: HyperVector, u: FlatLatent, rng: torch.Generator
    ) -> tuple[float, torch.Tensor]: ...

    def set_hyper(self, theta: HyperVector) -> None: ...


@dataclass(frozen=True)
class OptimizerState:
    """Acumuladores de primer y segundo momento del paso adaptativo."""

    m: torch.Tensor
    v: torch.Tensor
    step: int = 0
    learning_rate: float = DEFAULT_LEARNING_RATE
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, size: int, learning_rate: float = DEFAULT_LEARNING_RATE) -> "OptimizerState":
        if learning_rate < 0:
            raise InvalidArgumentError(reason="learning rate must be non-negative")
        return cls(
            m=torch.zeros(size, dtype=DTYPE),
            v=torch.zeros(size, dtype=DTYPE),
            learning_rate=learning_rate,
        )


def adaptive_step(opt: OptimizerState, grad: torch.Tensor) -> tuple[torch.Tensor, OptimizerState]:
    """
    Paso de ascenso con momentos corregidos por sesgo.

    Returns
    -------
    tuple[torch.Tensor, OptimizerState]
        Incremento a sumar a los parámetros y estado actualizado.

    Examples
    --------
    >>> opt = OptimizerState.create(1, learning_rate=0.1)
    >>> update, opt = adaptive_step(opt, torch.tensor([5.0], dtype=torch.float64))
    >>> round(float(update), 6)
    0.1
    """
    if grad.shape != opt.m.shape:
        raise InvalidArgumentError(
            reason=f"gradient has shape {tuple(grad.shape)}, optimizer expects {tuple(opt.m.shape)}"
        )
    grad = grad.detach()
    step = opt.step + 1
    m = opt.beta1 * opt.m + (1.0 - opt.beta1) * grad
    v = opt.beta2 * opt.v + (1.0 - opt.beta2) * grad * grad
    m_hat = m / (1.0 - opt.beta1**step)
    v_hat = v / (1.0 - opt.beta2**step)
    update = opt.learning_rate * m_hat / (torch.sqrt(v_hat) + opt.eps)
    return update, replace(opt, m=m, v=v, step=step)


def window_gradient(
    window: SampleWindow,
    theta: HyperVector,
    objective: HyperObjective,
    rng: torch.Generator,
) -> tuple[FlatLatent, float, torch.Tensor]:
    """Elige una muestra uniforme de la ventana y evalúa el objetivo en ella."""
    if len(window) == 0:
        raise InvalidStateError(reason="cannot take a hyperparameter step from an empty window")
    index = int(torch.randint(len(window), (1,), generator=rng))
    sample = window[index]
    value, grad = objective(theta, sample, rng)
    return sample, value, grad


def mw_mcem_step(
    window: SampleWindow,
    theta: HyperVector,
    opt: OptimizerState,
    objective: HyperObjective,
    rng: torch.Generator,
    sink: DiagnosticsSink | None = None,
    iteration: int = 0,
) -> tuple[HyperVector, OptimizerState]:
    """
    Un paso de Moving Window MCEM: muestra aleatoria de la ventana y un paso
    adaptativo de ascenso sobre log p(y, u′ | θ). La ventana no se modifica.
    """
    _, value, grad = window_gradient(window, theta, objective, rng)
    update, opt = adaptive_step(opt, grad)
    if sink is not None:
        sink.emit(
            DiagnosticRecord(
                stream=MW_MCEM_STREAM,
                iteration=iteration,
                values={"grad_norm": float(torch.linalg.vector_norm(grad)), "log_joint": value},
            )
        )
    return theta.with_values((theta.values + update).detach()), opt


def m_step(
    theta: HyperVector,
    samples: list[FlatLatent],
    objective: HyperObjective,
    opt: OptimizerState,
    rng: torch.Generator,
    budget: int,
    tolerance: float = 0.0,
) -> tuple[HyperVector, OptimizerState, float, float]:
    """
    Asciende Q(θ) = (1/m) Σ log p(y, u_i | θ) con pasos adaptativos hasta
    agotar ``budget`` o hasta que el incremento tenga norma ≤ ``tolerance``.

    Returns
    -------
    tuple
        θ, estado del optimizador, último Q y norma del último gradiente.
    """
    if not samples:
        raise InvalidArgumentError(reason="the M-step needs at least one sample")
    q_value = math.nan
    grad_norm = math.nan
    for _ in range(budget):
        total = torch.zeros(theta.size, dtype=DTYPE)
        q_value = 0.0
        for sample in samples:
            value, grad = objective(theta, sample, rng)
            total = total + grad
            q_value += value
        q_grad = total / len(samples)
        q_value /= len(samples)
        grad_norm = float(torch.linalg.vector_norm(q_grad))
        update, opt = adaptive_step(opt, q_grad)
        theta = theta.with_values((theta.values + update).detach())
        if float(torch.linalg.vector_norm(update)) <= tolerance:
            break
    return theta, opt, q_value, grad_norm


def mcem_run(
    theta: HyperVector,
    objective: HyperObjective,
    m: int,
    sampler: PosteriorSampler,
    max_outer: int,
    rng: torch.Generator,
    m_step_budget: int = 100,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    tolerance: float = 0.0,
    sink: DiagnosticsSink | None = None,
) -> HyperVector:
    """
    MCEM clásico: E-step con ``m`` muestras nuevas en el θ actual y M-step
    sobre la media de las log-conjuntas.

    Parameters
    ----------
    theta : HyperVector
        Hiperparámetros iniciales.
    objective : HyperObjective
        log p(y, u | θ) y su gradiente.
    m : int
        Tamaño del conjunto de muestras (≥ 1).
    sampler : PosteriorSampler
        Genera muestras de p(u | y, θ).
    max_outer : int
        Número de rondas E/M.
    rng : torch.Generator
        Flujo aleatorio.
    m_step_budget : int
        Pasos adaptativos por M-step.

    Returns
    -------
    HyperVector
        Hiperparámetros finales.
    """
    if m < 1:
        raise InvalidArgumentError(reason="MCEM set size m must be at least 1")
    if max_outer < 0 or m_step_budget < 1:
        raise InvalidArgumentError(reason="max_outer must be >= 0 and m_step_budget >= 1")
    sink = sink or NullDiagnosticsSink()
    opt = OptimizerState.create(theta.size, learning_rate)
    clock = Stopwatch()
    for outer in range(max_outer):
        samples = sampler(theta, m, rng)
        theta, opt, q_value, grad_norm = m_step(
            theta, samples, objective, opt, rng, m_step_budget, tolerance
        )
        sink.emit(
            clock.record(MCEM_STREAM, outer, {"grad_norm": grad_norm, "log_joint": q_value})
        )
        logger.debug("mcem round", round=outer, q=q_value, grad_norm=grad_norm)
    return theta


class NullStepper(HyperStepper):
    """No modifica los hiperparámetros."""

    def after_step(
        self, iteration: int, u: FlatLatent, target: PosteriorTarget, rng: torch.Generator
    ) -> None:
        pass


class MovingWindowStepper(HyperStepper):
    """
    Moving Window MCEM intercalado con el muestreador.

    Durante las primeras ``capacity`` iteraciones solo se llena la ventana;
    después cada iteración da un paso de hiperparámetros sobre una muestra
    aleatoria de la ventana y empuja la posición actual, que expulsa la
    más antigua.
    """

    def __init__(
        self,
        capacity: int = DEFAULT_WINDOW_CAPACITY,
        learning_rate: float = DEFAULT_LEARNING_RATE,
        sink: DiagnosticsSink | None = None,
    ) -> None:
        self.window = SampleWindow(capacity)
        self.learning_rate = learning_rate
        self.sink = sink or NullDiagnosticsSink()
        self.opt: OptimizerState | None = None
        self.hyper_steps = 0
        self._clock = Stopwatch()

    def after_step(
        self, iteration: int, u: FlatLatent, target: PosteriorTarget, rng: torch.Generator
    ) -> None:
        if not self.window.full:
            self.window.push(u.detach())
            return
        hyper_target = _as_hyper_target(target)
        theta = target.model.hyper_vector()
        if self.opt is None:
            self.opt = OptimizerState.create(theta.size, self.learning_rate)
        _, value, grad = window_gradient(self.window, theta, hyper_target.hyper_objective, rng)
        update, self.opt = adaptive_step(self.opt, grad)
        hyper_target.set_hyper(theta.with_values(theta.values + update))
        self.window.push(u.detach())
        self.hyper_steps += 1
        self.sink.emit(
            self._clock.record(
                MW_MCEM_STREAM,
                iteration,
                {"grad_norm": float(torch.linalg.vector_norm(grad)), "log_joint": value},
            )
        )


def _as_hyper_target(target: PosteriorTarget) -> HyperTarget:
    if not (hasattr(target, "hyper_objective") and hasattr(target, "set_hyper")):
        raise InvalidArgumentError(reason="target does not expose trainable hyperparameters")
    return target  # type: ignore[return-value]


def run_mcem_burn_in(
    target: PosteriorTarget,
    n_iters: int,
    rng: torch.Generator,
    set_size: int = 10,
    estep_iters: int = 500,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    epsilon: float = DEFAULT_STEP_SIZE,
    decay: float = DEFAULT_DECAY,
    sink: DiagnosticsSink | None = None,
    on_iteration: Callable[[int, FlatLatent, object], None] | None = None,
    integrator: Integrator = Integrator.EXPLICIT,
) -> tuple[SamplerState, object]:
    """
    Burn-in con MCEM clásico y el mismo presupuesto de gradientes que
    Moving Window MCEM.

    Cada E-step avanza la cadena ``estep_iters`` iteraciones (con
    auto-ajuste) y guarda ``set_size`` muestras equiespaciadas; cada M-step
    da ``estep_iters // set_size`` pasos sobre Q, es decir ``estep_iters``
    evaluaciones de gradiente de θ.
    ``on_iteration`` se invoca tras cada paso de la cadena.
    """
    if n_iters < 1:
        raise InvalidArgumentError(reason="n_iters must be at least 1")
    if set_size < 1 or estep_iters < set_size:
        raise InvalidArgumentError(reason="estep_iters must be >= set_size >= 1")
    hyper_target = _as_hyper_target(target)
    sink = sink or NullDiagnosticsSink()
    spacing = estep_iters // set_size
    state = SamplerState.initial(target.initial_position(rng), epsilon, decay, integrator)
    clock = Stopwatch()
    done = 0

    def sampler(theta: HyperVector, m: int, rng: torch.Generator) -> list[FlatLatent]:
        nonlocal state, done
        hyper_target.set_hyper(theta)
        samples: list[FlatLatent] = []
        iters = min(estep_iters, n_iters - done)
        for it in range(iters):
            grad, log_joint = target.potential_and_grad(state.u, rng)
            state = autotune_update(state, grad)
            state = sghmc_step(state, grad, rng)
            if (it + 1) % spacing == 0 and len(samples) < m:
                samples.append(state.u.detach())
            sink.emit(
                clock.record(
                    SGHMC_STREAM,
                    done + it,
                    {"log_joint": log_joint, "clamp_count": state.clamp_count},
                )
            )
            if on_iteration is not None:
                on_iteration(done + it, state.u, target.model)
        done += iters
        return samples or [state.u.detach()]

    max_outer = math.ceil(n_iters / estep_iters)
    logger.info("mcem burn-in started", iterations=n_iters, rounds=max_outer, set_size=set_size)
    theta = mcem_run(
        target.model.hyper_vector(),
        hyper_target.hyper_objective,
        set_size,
        sampler,
        max_outer,
        rng,
        m_step_budget=max(1, spacing),
        learning_rate=learning_rate,
        sink=sink,
    )
    hyper_target.set_hyper(theta)
    state = replace(state, phase=SamplerPhase.SAMPLING)
    logger.info("mcem burn-in finished", seconds=round(clock.elapsed(), 3))
    return state, target.model
