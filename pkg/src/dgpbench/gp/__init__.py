"""Kernels, capas GP dispersas y el modelo DGP."""

from .kernels import CholFactor
from .kernels import KernelParams
from .kernels import SolveMode
from .kernels import chol_psd
from .kernels import diag_gram
from .kernels import gram
from .kernels import se_ard
from .kernels import tri_solve
from .layer import ConditionalMoments
from .layer import LayerState
from .layer import MeanFnKind
from .layer import MeanFnSpec
from .layer import conditional
from .layer import sample_layer
from .model import DGPModel
from .model import FlatLatent
from .model import GradTarget
from .model import HyperVector
from .model import PredictiveMixture
from .model import grad_log_joint
from .model import init_dgp_model
from .model import log_joint_estimate
from .model import mixture_mll
from .model import predict_mixture
from .model import propagate

__all__ = [
    # Kernel
    "CholFactor",
    "KernelParams",
    "SolveMode",
    "chol_psd",
    "diag_gram",
    "gram",
    "se_ard",
    "tri_solve",
    # Capa
    "ConditionalMoments",
    "LayerState",
    "MeanFnKind",
    "MeanFnSpec",
    "conditional",
    "sample_layer",
    # Modelo
    "DGPModel",
    "FlatLatent",
    "GradTarget",
    "HyperVector",
    "PredictiveMixture",
    "grad_log_joint",
    "init_dgp_model",
    "log_joint_estimate",
    "mixture_mll",
    "predict_mixture",
    "propagate",
]
