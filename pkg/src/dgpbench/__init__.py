"""dgpbench - Deep Gaussian Processes con SGHMC, Moving Window MCEM y DSVI."""

from .core.config import ExperimentConfig
from .core.config import Method
from .core.config import load_config
from .exceptions import DGPBenchError
from .gp.model import DGPModel
from .gp.model import PredictiveMixture
from .gp.model import init_dgp_model
from .harness.data import Dataset
from .harness.data import load_csv
from .harness.runner import RunRecord
from .harness.runner import run_experiment

__version__ = "0.1.0"

__all__ = [
    # Configuración
    "ExperimentConfig",
    "Method",
    "load_config",
    # Modelo
    "DGPModel",
    "PredictiveMixture",
    "init_dgp_model",
    # Experimentos
    "Dataset",
    "load_csv",
    "RunRecord",
    "run_experiment",
    # Errores
    "DGPBenchError",
]
