"""Muestreo SGHMC y optimización de hiperparámetros por MCEM."""

from .mcem import MovingWindowStepper
from .mcem import NullStepper
from .mcem import OptimizerState
from .mcem import adaptive_step
from .mcem import mcem_run
from .mcem import mw_mcem_step
from .mcem import run_mcem_burn_in
from .sghmc import Integrator
from .sghmc import SamplerPhase
from .sghmc import SamplerState
from .sghmc import SampleWindow
from .sghmc import autotune_update
from .sghmc import run_burn_in
from .sghmc import run_sampling
from .sghmc import sghmc_step
from .targets import DGPPosterior
from .targets import GaussianTarget

__all__ = [
    "DGPPosterior",
    "GaussianTarget",
    "Integrator",
    "MovingWindowStepper",
    "NullStepper",
    "OptimizerState",
    "SamplerPhase",
    "SamplerState",
    "SampleWindow",
    "adaptive_step",
    "autotune_update",
    "mcem_run",
    "mw_mcem_step",
    "run_burn_in",
    "run_mcem_burn_in",
    "run_sampling",
    "sghmc_step",
]
