"""
Muestreador SGHMC con auto-ajuste adaptativo a la escala.

Las actualizaciones usan la parametrización v = ε·M⁻¹·r con M⁻¹ = diag(V̂^{−½})
y una fricción constante ``decay`` = ε·V̂^{−½}·C, elemento a elemento.
"""

from collections import deque
from collections.abc import Callable
from collections.abc import Iterator
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import replace
from enum import Enum
from typing import Any
from typing import overload

import torch

from ..exceptions import InvalidArgumentError
from ..exceptions import InvalidStateError
from ..gp.kernels import DTYPE
from ..gp.model import FlatLatent
from ..interfaces import DiagnosticsSink
from ..interfaces import HyperStepper
from ..interfaces import PosteriorTarget
from ..observability.diagnostics import SGHMC_STREAM
from ..observability.diagnostics import NullDiagnosticsSink
from ..observability.diagnostics import Stopwatch
from ..observability.logging import get_logger

logger = get_logger(__name__)

DEFAULT_STEP_SIZE = 0.01
DEFAULT_DECAY = 0.05
DEFAULT_THIN = 50
DEFAULT_NUM_SAMPLES = 200
INITIAL_TAU = 10.0

_V_FLOOR = 1e-16


class SamplerPhase(Enum):
    BURN_IN = "burn_in"
    SAMPLING = "sampling"


class Integrator(Enum):
    """
    Discretización del paso. ``EXPLICIT`` mueve u con la velocidad previa;
    ``SEMI_IMPLICIT`` actualiza primero v y mueve u con v′.
    """

    EXPLICIT = "explicit"
    SEMI_IMPLICIT = "semi_implicit"


@dataclass(frozen=True)
class SamplerState:
    """
    Estado de la cadena: posición, velocidad y estadísticos de auto-ajuste.

    ``clamp_count`` cuenta las entradas de varianza de ruido negativas que
    se recortaron a 0.
    """

    u: FlatLatent
    v: torch.Tensor
    V_hat: torch.Tensor
    g_hat: torch.Tensor
    tau: torch.Tensor
    epsilon: float = DEFAULT_STEP_SIZE
    decay: float = DEFAULT_DECAY
    phase: SamplerPhase = SamplerPhase.BURN_IN
    clamp_count: int = 0
    integrator: Integrator = Integrator.EXPLICIT

    def __post_init__(self) -> None:
        n = self.u.size
        for name in ("v", "V_hat", "g_hat", "tau"):
            if getattr(self, name).shape != (n,):
                raise InvalidArgumentError(reason=f"{name} must have length {n}")
        if self.epsilon <= 0:
            raise InvalidArgumentError(reason="epsilon must be positive")
        if not 0.0 <= self.decay < 1.0:
            raise InvalidArgumentError(reason="decay must lie in [0, 1)")

    @classmethod
    def initial(
        cls,
        u: FlatLatent,
        epsilon: float = DEFAULT_STEP_SIZE,
        decay: float = DEFAULT_DECAY,
        integrator: Integrator = Integrator.EXPLICIT,
    ) -> "SamplerState":
        """v = 0, V̂ = 1, g = 0 y τ = 10 en todas las coordenadas."""
        n = u.size
        return cls(
            u=u,
            v=torch.zeros(n, dtype=DTYPE),
            V_hat=torch.ones(n, dtype=DTYPE),
            g_hat=torch.zeros(n, dtype=DTYPE),
            tau=torch.full((n,), INITIAL_TAU, dtype=DTYPE),
            epsilon=epsilon,
            decay=decay,
            integrator=integrator,
        )


class SampleWindow(Sequence[FlatLatent]):
    """
    FIFO de capacidad fija con las muestras más recientes.

    Examples
    --------
    >>> window = SampleWindow(2)
    >>> for x in "abc":
    ...     window.push(x)
    >>> list(window)
    ['b', 'c']
    """

    def __init__(self, capacity: int, entries: Sequence[FlatLatent] = ()) -> None:
        if capacity < 1:
            raise InvalidArgumentError(reason="window capacity must be positive")
        self.capacity = capacity
        self._entries: deque[FlatLatent] = deque(entries, maxlen=capacity)

    def push(self, sample: FlatLatent) -> None:
        self._entries.append(sample)

    @property
    def full(self) -> bool:
        return len(self._entries) == self.capacity

    def __len__(self) -> int:
        return len(self._entries)

    @overload
    def __getitem__(self, index: int) -> FlatLatent: ...

    @overload
    def __getitem__(self, index: slice) -> list[FlatLatent]: ...

    def __getitem__(self, index: Any) -> Any:
        if isinstance(index, slice):
            return list(self._entries)[index]
        return self._entries[index]

    def __iter__(self) -> Iterator[FlatLatent]:
        return iter(self._entries)

    def as_matrix(self) -> torch.Tensor:
        """Muestras apiladas, matriz (len, tamaño latente)."""
        if not self._entries:
            raise InvalidStateError(reason="sample window is empty")
        return torch.stack([s.values for s in self._entries])


def autotune_update(state: SamplerState, grad: torch.Tensor) -> SamplerState:
    """
    Actualiza V̂, g y τ con medias móviles exponenciales de ventana τ.

    ``grad`` es ∇U. V̂ y g usan el τ previo; τ usa los nuevos V̂ y g.
    """
    if state.phase is not SamplerPhase.BURN_IN:
        raise InvalidStateError(reason="auto-tuning statistics are frozen after burn-in")
    inv_tau = 1.0 / state.tau
    V_hat = state.V_hat - inv_tau * state.V_hat + inv_tau * grad * grad
    g_hat = state.g_hat - inv_tau * state.g_hat + inv_tau * grad
    ratio = g_hat * g_hat / torch.clamp(V_hat, min=_V_FLOOR)
    tau = torch.clamp(state.tau - ratio * state.tau + 1.0, min=1.0)
    return replace(state, V_hat=V_hat, g_hat=g_hat, tau=tau)


def sghmc_step(
    state: SamplerState,
    grad: torch.Tensor,
    rng: torch.Generator,
    inject_noise: bool = True,
) -> SamplerState:
    """
    Un paso SGHMC con ``grad`` = ∇U evaluado en la posición actual.

    Δu = v y Δv = −ε²V̂^{−½}∇U − decay·v + N(0, 2ε²·decay·V̂^{−½} − ε⁴). Con
    ``Integrator.SEMI_IMPLICIT`` la posición avanza con la nueva velocidad.
    Las varianzas de ruido negativas se recortan a 0 y se cuentan.
    """
    eps = state.epsilon
    inv_sqrt_V = torch.rsqrt(torch.clamp(state.V_hat, min=_V_FLOOR))

    noise_var = 2.0 * eps**2 * state.decay * inv_sqrt_V - eps**4
    negative = noise_var < 0
    clamped = int(negative.sum())
    noise_var = torch.clamp(noise_var, min=0.0)

    v_new = state.v - eps**2 * inv_sqrt_V * grad - state.decay * state.v
    if inject_noise:
        noise = torch.randn(state.v.shape, generator=rng, dtype=DTYPE)
        v_new = v_new + torch.sqrt(noise_var) * noise
    step = v_new if state.integrator is Integrator.SEMI_IMPLICIT else state.v
    u_new = state.u.values + step

    return replace(
        state,
        u=state.u.with_values(u_new.detach()),
        v=v_new.detach(),
        clamp_count=state.clamp_count + clamped,
    )


def run_burn_in(
    target: PosteriorTarget,
    n_iters: int,
    rng: torch.Generator,
    hyper_stepper: HyperStepper | None = None,
    state: SamplerState | None = None,
    epsilon: float = DEFAULT_STEP_SIZE,
    decay: float = DEFAULT_DECAY,
    sink: DiagnosticsSink | None = None,
    on_iteration: Callable[[int, FlatLatent, Any], None] | None = None,
    integrator: Integrator = Integrator.EXPLICIT,
) -> tuple[SamplerState, Any]:
    """
    Fase de burn-in: por iteración auto-ajuste, paso SGHMC y paso de
    hiperparámetros.

    Parameters
    ----------
    target : PosteriorTarget
        Objetivo a muestrear.
    n_iters : int
        Número de iteraciones (≥ 1).
    rng : torch.Generator
        Flujo aleatorio de la cadena.
    hyper_stepper : HyperStepper, optional
        Paso de hiperparámetros tras cada iteración; sin él θ no cambia.
    state : SamplerState, optional
        Estado inicial; por defecto se parte de ``target.initial_position``.
    epsilon, decay : float
        Tamaño de paso y fricción.
    sink : DiagnosticsSink, optional
        Destino de los registros ``sghmc``.
    on_iteration : callable, optional
        Se invoca tras cada iteración con (iteración, u, modelo actual).
    integrator : Integrator
        Discretización del paso cuando no se da ``state``.

    Returns
    -------
    tuple[SamplerState, Any]
        Estado con los estadísticos congelados y el modelo del objetivo.
    """
    if n_iters < 1:
        raise InvalidArgumentError(reason="n_iters must be at least 1")
    sink = sink or NullDiagnosticsSink()
    if state is None:
        state = SamplerState.initial(target.initial_position(rng), epsilon, decay, integrator)
    elif state.phase is not SamplerPhase.BURN_IN:
        raise InvalidStateError(reason="burn-in requires a sampler in the burn-in phase")

    clock = Stopwatch()
    logger.info("burn-in started", iterations=n_iters, dimension=state.u.size)
    for it in range(n_iters):
        grad, log_joint = target.potential_and_grad(state.u, rng)
        state = autotune_update(state, grad)
        state = sghmc_step(state, grad, rng)
        if hyper_stepper is not None:
            hyper_stepper.after_step(it, state.u, target, rng)
        sink.emit(
            clock.record(
                SGHMC_STREAM, it, {"log_joint": log_joint, "clamp_count": state.clamp_count}
            )
        )
        if on_iteration is not None:
            on_iteration(it, state.u, target.model)

    state = replace(state, phase=SamplerPhase.SAMPLING)
    logger.info(
        "burn-in finished",
        iterations=n_iters,
        seconds=round(clock.elapsed(), 3),
        clamp_count=state.clamp_count,
    )
    return state, target.model


def run_sampling(
    state: SamplerState,
    target: PosteriorTarget,
    rng: torch.Generator,
    n_samples: int = DEFAULT_NUM_SAMPLES,
    thin: int = DEFAULT_THIN,
    window: SampleWindow | None = None,
    sink: DiagnosticsSink | None = None,
    on_sample: Callable[[int, SampleWindow], None] | None = None,
) -> tuple[SamplerState, SampleWindow]:
    """
    Fase de muestreo con V̂, ε y fricción fijos: ``n_samples·thin`` pasos,
    guardando u cada ``thin`` pasos.

    ``on_sample(index, window)`` se invoca tras guardar cada muestra.
    """
    if n_samples < 1 or thin < 1:
        raise InvalidArgumentError(reason="n_samples and thin must be at least 1")
    if state.phase is SamplerPhase.BURN_IN:
        state = replace(state, phase=SamplerPhase.SAMPLING)
    sink = sink or NullDiagnosticsSink()
    window = window if window is not None else SampleWindow(n_samples)

    clock = Stopwatch()
    logger.info("sampling started", samples=n_samples, thin=thin)
    total = n_samples * thin
    for it in range(total):
        grad, log_joint = target.potential_and_grad(state.u, rng)
        state = sghmc_step(state, grad, rng)
        sink.emit(
            clock.record(
                SGHMC_STREAM, it, {"log_joint": log_joint, "clamp_count": state.clamp_count}
            )
        )
        if (it + 1) % thin == 0:
            window.push(state.u.detach())
            if on_sample is not None:
                on_sample((it + 1) // thin - 1, window)

    logger.info("sampling finished", samples=len(window), seconds=round(clock.elapsed(), 3))
    return state, window
