"""Configuración de experimentos."""

from .config import ExperimentConfig
from .config import HyperOptimizer
from .config import Method
from .config import SplitMode
from .config import load_config
from .config import parse_override

__all__ = [
    "ExperimentConfig",
    "HyperOptimizer",
    "Method",
    "SplitMode",
    "load_config",
    "parse_override",
]
