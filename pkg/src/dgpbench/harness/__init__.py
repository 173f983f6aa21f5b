"""Banco de pruebas: datos, ejecución, persistencia y curvas."""

from .curves import emit_curves
from .data import Dataset
from .data import load_csv
from .data import normalize
from .data import split
from .persistence import TrainedModel
from .persistence import load_model
from .persistence import save_model
from .runner import RunRecord
from .runner import evaluate
from .runner import run_experiment
from .runner import run_repetitions
from .toy import toy_dataset

__all__ = [
    "Dataset",
    "RunRecord",
    "TrainedModel",
    "emit_curves",
    "evaluate",
    "load_csv",
    "load_model",
    "normalize",
    "run_experiment",
    "run_repetitions",
    "save_model",
    "split",
    "toy_dataset",
]
