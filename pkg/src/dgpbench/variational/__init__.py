"""DSVI con parametrizaciones acoplada y desacoplada."""

from .coupled import CoupledVarParams
from .coupled import kl_coupled
from .coupled import variational_marginal
from .decoupled import DecoupledVarParams
from .decoupled import MeanParameterization
from .decoupled import decoupled_marginal
from .decoupled import kl_decoupled
from .dsvi import DSVIConfig
from .dsvi import VariationalState
from .dsvi import dsvi_train
from .dsvi import elbo_estimate
from .dsvi import init_variational_state
from .dsvi import predict_variational
from .dsvi import variational_window

__all__ = [
    "CoupledVarParams",
    "DSVIConfig",
    "DecoupledVarParams",
    "MeanParameterization",
    "VariationalState",
    "decoupled_marginal",
    "dsvi_train",
    "elbo_estimate",
    "init_variational_state",
    "kl_coupled",
    "kl_decoupled",
    "predict_variational",
    "variational_marginal",
    "variational_window",
]
