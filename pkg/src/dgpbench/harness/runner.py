"""Ejecución de experimentos: entrenamiento, evaluación y repeticiones."""

import csv
import math
import time
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import torch
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field

from ..core.config import ExperimentConfig
from ..core.config import HyperOptimizer
from ..core.config import SplitMode
from ..exceptions import DGPBenchError
from ..exceptions import InvalidArgumentError
from ..gp.model import DGPModel
from ..gp.model import FlatLatent
from ..gp.model import PredictiveMixture
from ..gp.model import init_dgp_model
from ..gp.model import mixture_mll
from ..gp.model import predict_mixture
from ..inference.mcem import MovingWindowStepper
from ..inference.mcem import NullStepper
from ..inference.mcem import run_mcem_burn_in
from ..inference.sghmc import Integrator
from ..inference.sghmc import SampleWindow
from ..inference.sghmc import run_burn_in
from ..inference.sghmc import run_sampling
from ..inference.targets import DGPPosterior
from ..interfaces import DiagnosticRecord
from ..interfaces import DiagnosticsSink
from ..observability.diagnostics import CHECKPOINT_STREAM
from ..observability.diagnostics import InMemoryDiagnosticsSink
from ..observability.diagnostics import LoggingDiagnosticsSink
from ..observability.diagnostics import NullDiagnosticsSink
from ..observability.diagnostics import Stopwatch
from ..observability.logging import LoggingConfig
from ..observability.logging import configure_logging
from ..observability.logging import get_logger
from ..variational.dsvi import DSVIConfig
from ..variational.dsvi import VariationalState
from ..variational.dsvi import dsvi_train
from ..variational.dsvi import init_variational_state
from ..variational.dsvi import predict_variational
from .curves import curve_points
from .curves import emit_curves
from .data import Dataset
from .data import Normalization
from .data import normalize
from .data import split
from .data import split_fixed
from .persistence import TrainedModel
from .persistence import save_model

logger = get_logger(__name__)

RUN_RECORD_FILE = "run.json"
MODEL_FILE = "model.json"
DIAGNOSTICS_FILE = "diagnostics.csv"
CURVES_FILE = "curves.csv"

# muestras recientes con las que se evalúa un checkpoint durante el burn-in
CHECKPOINT_RECENT_SAMPLES = 20
LOG_DIAGNOSTICS_EVERY = 1000


class RunRecord(BaseModel):
    """
    Resultado de una ejecución.

    ``diagnostics`` no se serializa con el registro; se escribe aparte en
    ``diagnostics.csv``.
    """

    model_config = ConfigDict(extra="forbid")

    config: dict[str, Any]
    method: str
    dataset: str
    seed: int
    num_train: int = 0
    num_test: int = 0
    test_mll: float | None = None
    test_rmse: float | None = None
    phase_seconds: dict[str, float] = Field(default_factory=dict)
    diagnostics: list[dict[str, Any]] = Field(default_factory=list, exclude=True)
    artifact_path: str | None = None
    diagnostics_path: str | None = None
    curves_path: str | None = None
    error: dict[str, Any] | None = None

    @property
    def succeeded(self) -> bool:
        return self.error is None and self.test_mll is not None


def evaluate(
    predictions: PredictiveMixture,
    y_test: torch.Tensor,
    normalization: Normalization | None = None,
) -> tuple[float, float]:
    """
    MLL de la mezcla y RMSE de su media frente a ``y_test`` en unidades
    originales.

    Si se da ``normalization`` las predicciones se consideran normalizadas y
    se devuelven a unidades originales (medias y varianzas) antes de medir.

    Examples
    --------
    >>> mixture = PredictiveMixture(
    ...     means=torch.zeros(1, 2, 1, dtype=torch.float64),
    ...     variances=torch.ones(1, 2, 1, dtype=torch.float64),
    ... )
    >>> mll, rmse = evaluate(mixture, torch.zeros(2, 1, dtype=torch.float64))
    >>> (round(mll, 6), rmse)
    (-0.918939, 0.0)
    """
    if normalization is not None:
        predictions = PredictiveMixture(
            means=normalization.restore_y(predictions.means),
            variances=normalization.restore_variance(predictions.variances),
        )
    mll = mixture_mll(predictions, y_test)
    resid = predictions.mean() - y_test
    rmse = float(torch.sqrt((resid * resid).mean()))
    return mll, rmse


class CheckpointRecorder:
    """
    Evalúa el conjunto de test cada ``every`` iteraciones y emite registros
    ``checkpoint`` (test_mll, test_rmse).

    El tiempo gastado evaluando se descuenta del reloj de los registros, de
    modo que ``wall_clock_s`` refleja solo el entrenamiento.
    """

    def __init__(
        self,
        test: Dataset,
        every: int,
        sink: DiagnosticsSink,
        seed: int = 0,
        num_samples: int = 100,
        recent: int = CHECKPOINT_RECENT_SAMPLES,
    ) -> None:
        if every < 1:
            raise InvalidArgumentError(reason="checkpoint interval must be positive")
        if test.normalization is None:
            raise InvalidArgumentError(reason="checkpoint data must be normalized")
        self.every = every
        self.sink = sink
        self.seed = seed
        self.num_samples = num_samples
        self._X = test.X
        self._y = test.normalization.restore_y(test.y)
        self._normalization = test.normalization
        self._recent = SampleWindow(recent)
        self._clock = Stopwatch()
        self._eval_seconds = 0.0
        self.count = 0

    def _due(self, iteration: int) -> bool:
        return (iteration + 1) % self.every == 0

    def _rng(self) -> torch.Generator:
        return torch.Generator().manual_seed(self.seed)

    def _emit(self, iteration: int, mixture: PredictiveMixture, started: float) -> None:
        mll, rmse = evaluate(mixture, self._y, self._normalization)
        self.sink.emit(
            DiagnosticRecord(
                stream=CHECKPOINT_STREAM,
                iteration=iteration,
                values={"test_mll": mll, "test_rmse": rmse},
                wall_clock_s=max(0.0, started - self._eval_seconds),
            )
        )
        self._eval_seconds += self._clock.elapsed() - started
        self.count += 1

    def observe_latent(self, iteration: int, u: FlatLatent, model: DGPModel) -> None:
        self._recent.push(u.detach())
        if self._due(iteration):
            started = self._clock.elapsed()
            mixture = predict_mixture(self._X, self._recent, model, self._rng())
            self._emit(iteration, mixture, started)

    def observe_window(self, iteration: int, window: SampleWindow, model: DGPModel) -> None:
        started = self._clock.elapsed()
        self._emit(iteration, predict_mixture(self._X, window, model, self._rng()), started)

    def observe_variational(self, iteration: int, model: DGPModel, state: VariationalState) -> None:
        if self._due(iteration):
            started = self._clock.elapsed()
            mixture = predict_variational(self._X, model, state, self._rng(), self.num_samples)
            self._emit(iteration, mixture, started)


def train_model(
    config: ExperimentConfig,
    train: Dataset,
    rng: torch.Generator,
    sink: DiagnosticsSink | None = None,
    recorder: CheckpointRecorder | None = None,
) -> tuple[TrainedModel, dict[str, float]]:
    """
    Entrena el método de ``config`` sobre datos ya normalizados.

    Returns
    -------
    tuple[TrainedModel, dict[str, float]]
        Modelo entrenado y segundos por fase.
    """
    if train.normalization is None:
        raise InvalidArgumentError(reason="training data must be normalized")
    sink = sink or NullDiagnosticsSink()
    method = config.method
    phases: dict[str, float] = {}
    clock = Stopwatch()
    model = init_dgp_model(
        train.X,
        train.output_dim,
        config.hidden_widths(),
        config.num_inducing,
        rng,
        hidden_mean_function=config.hidden_mean_function,
        noise_variance=config.init_noise_variance,
        jitter=config.jitter,
    )
    prediction_seed = config.seed + 1

    if method.is_sampler:
        target = DGPPosterior(model, train.X, train.y, config.minibatch_size)
        on_iteration = recorder.observe_latent if recorder is not None else None
        if config.hyper_optimizer is HyperOptimizer.MCEM:
            state, _ = run_mcem_burn_in(
                target,
                config.burn_in_iters,
                rng,
                set_size=config.mcem_set_size,
                estep_iters=config.mcem_estep_iters,
                learning_rate=config.learning_rate,
                epsilon=config.step_size,
                decay=config.decay,
                sink=sink,
                on_iteration=on_iteration,
                integrator=Integrator(config.sghmc_integrator),
            )
        else:
            stepper = (
                MovingWindowStepper(config.window_capacity, config.learning_rate, sink)
                if config.hyper_optimizer is HyperOptimizer.MW_MCEM
                else NullStepper()
            )
            state, _ = run_burn_in(
                target,
                config.burn_in_iters,
                rng,
                stepper,
                epsilon=config.step_size,
                decay=config.decay,
                sink=sink,
                on_iteration=on_iteration,
                integrator=Integrator(config.sghmc_integrator),
            )
        phases["burn_in"] = clock.elapsed()

        def on_sample(index: int, window: SampleWindow) -> None:
            if recorder is None:
                return
            if (index + 1) % max(1, recorder.every // config.thinning) == 0:
                iteration = config.burn_in_iters + (index + 1) * config.thinning - 1
                recorder.observe_window(iteration, window, target.model)

        _, window = run_sampling(
            state,
            target,
            rng,
            n_samples=config.num_samples,
            thin=config.thinning,
            sink=sink,
            on_sample=on_sample,
        )
        phases["sampling"] = clock.elapsed() - phases["burn_in"]
        trained = TrainedModel(
            config=config,
            model=target.model.detach(),
            normalization=train.normalization,
            window=window,
            prediction_seed=prediction_seed,
        )
    else:
        var_state = init_variational_state(
            model,
            decoupled=method.is_decoupled,
            num_mean_inducing=config.num_inducing_mean,
            num_cov_inducing=config.num_inducing_cov,
            mean_parameterization=config.mean_parameterization,
            training_inputs=train.X,
            rng=rng,
        )
        dsvi_config = DSVIConfig(
            iterations=config.dsvi_iters,
            learning_rate=config.learning_rate,
            minibatch_size=config.minibatch_size,
            num_samples=config.dsvi_samples,
            train_hyperparameters=config.train_hyperparameters,
        )
        model, var_state, _ = dsvi_train(
            (train.X, train.y),
            model,
            var_state,
            dsvi_config,
            rng,
            sink,
            on_iteration=recorder.observe_variational if recorder is not None else None,
        )
        phases["dsvi"] = clock.elapsed()
        trained = TrainedModel(
            config=config,
            model=model,
            normalization=train.normalization,
            variational=var_state,
            prediction_seed=prediction_seed,
        )
    return trained, phases


def split_dataset(config: ExperimentConfig, dataset: Dataset) -> tuple[Dataset, Dataset]:
    """Partición en unidades originales según ``split_mode``."""
    if config.split_mode is SplitMode.FIXED:
        return split_fixed(dataset, config.fixed_test_rows)
    return split(dataset, config.split_fraction, config.seed)


def write_diagnostics(records: Sequence[DiagnosticRecord], path: str | Path) -> Path:
    """CSV largo: stream, iteration, wall_clock_s, name, value."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["stream", "iteration", "wall_clock_s", "name", "value"])
        for r in records:
            for name, value in r.values.items():
                writer.writerow(
                    [r.stream, r.iteration, f"{r.wall_clock_s:.6f}", name, repr(float(value))]
                )
    return path


def write_run_record(record: RunRecord, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(record.model_dump_json(indent=2), encoding="utf-8")
    return path


def read_run_record(path: str | Path) -> RunRecord:
    path = Path(path)
    if not path.exists():
        raise InvalidArgumentError(reason=f"run record not found: {path}")
    return RunRecord.model_validate_json(path.read_text(encoding="utf-8"))


def run_experiment(
    config: ExperimentConfig,
    dataset: Dataset,
    output_dir: str | Path | None = None,
    raise_errors: bool = True,
) -> RunRecord:
    """
    Parte, normaliza, entrena, evalúa y, si hay ``output_dir``, persiste el
    modelo, los diagnósticos, las curvas y el registro de la ejecución.

    Parameters
    ----------
    config : ExperimentConfig
        Configuración validada.
    dataset : Dataset
        Datos en unidades originales.
    output_dir : str | Path, optional
        Directorio de artefactos.
    raise_errors : bool
        Si es ``False`` los errores de dgpbench quedan solo en
        ``RunRecord.error``.

    Returns
    -------
    RunRecord
        Métricas de test en unidades originales y tiempos por fase.
    """
    torch.set_num_threads(config.num_threads)
    log = logger.bind(method=config.method.value, dataset=dataset.name, seed=config.seed)
    record = RunRecord(
        config=config.snapshot(), method=config.method.value, dataset=dataset.name, seed=config.seed
    )
    out = Path(output_dir) if output_dir is not None else None
    memory = InMemoryDiagnosticsSink()
    sink = LoggingDiagnosticsSink(every=LOG_DIAGNOSTICS_EVERY, inner=memory)

    log.info("experiment started")
    try:
        raw_train, raw_test = split_dataset(config, dataset)
        train, test = normalize(raw_train, raw_test)
        record.num_train = train.num_rows
        record.num_test = test.num_rows

        rng = torch.Generator().manual_seed(config.seed)
        recorder = None
        if config.checkpoint_every > 0:
            recorder = CheckpointRecorder(
                test,
                config.checkpoint_every,
                sink,
                seed=config.seed + 2,
                num_samples=config.prediction_samples,
            )
        trained, phases = train_model(config, train, rng, sink, recorder)

        started = time.perf_counter()
        mixture = trained.predict(raw_test.X)
        mll, rmse = evaluate(mixture, raw_test.y, trained.normalization)
        phases["predict"] = time.perf_counter() - started
        record.test_mll = mll
        record.test_rmse = rmse
        record.phase_seconds = phases
        if not math.isfinite(mll):
            log.warning("non-finite test MLL", test_mll=mll)

        if out is not None:
            record.artifact_path = str(save_model(trained, out / MODEL_FILE))
    except DGPBenchError as e:
        record.error = e.to_dict()
        log.error("experiment failed", error=e.error_code, message=str(e))
        if out is not None:
            write_run_record(record, out / RUN_RECORD_FILE)
        if raise_errors:
            raise
        return record

    record.diagnostics = [r.to_dict() for r in memory.records()]
    if out is not None:
        record.diagnostics_path = str(write_diagnostics(memory.records(), out / DIAGNOSTICS_FILE))
        points = curve_points(config.method.value, memory.records())
        if points:
            record.curves_path = str(emit_curves(points, out / CURVES_FILE))
        write_run_record(record, out / RUN_RECORD_FILE)
    log.info(
        "experiment finished",
        test_mll=record.test_mll,
        test_rmse=record.test_rmse,
        seconds=round(sum(record.phase_seconds.values()), 3),
    )
    return record


def _run_one(job: tuple[ExperimentConfig, Dataset, str | None, LoggingConfig | None]) -> RunRecord:
    config, dataset, output_dir, logging_config = job
    if logging_config is not None:
        configure_logging(logging_config)
    return run_experiment(config, dataset, output_dir, raise_errors=False)


def run_repetitions(
    config: ExperimentConfig,
    dataset: Dataset,
    seeds: Sequence[int] | None = None,
    workers: int = 1,
    output_dir: str | Path | None = None,
    logging_config: LoggingConfig | None = None,
) -> list[RunRecord]:
    """
    Ejecuta una repetición por semilla, cada una con su generador y su
    directorio ``seed_<n>``. Con ``workers > 1`` las repeticiones corren en
    procesos separados; el orden del resultado sigue el de ``seeds``.
    """
    if workers < 1:
        raise InvalidArgumentError(reason="workers must be positive")
    if seeds is None:
        seeds = [config.seed + r for r in range(config.repetitions)]
    jobs = [
        (
            config.with_overrides({"seed": s}),
            dataset,
            None if output_dir is None else str(Path(output_dir) / f"seed_{s}"),
            logging_config,
        )
        for s in seeds
    ]
    logger.info("repetitions started", runs=len(jobs), workers=workers, method=config.method.value)
    if workers == 1:
        records = [_run_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_one, jobs))
    failed = sum(1 for r in records if r.error is not None)
    logger.info("repetitions finished", runs=len(records), failed=failed)
    return records


@dataclass(frozen=True)
class MethodSummary:
    method: str
    runs: int
    failed: int
    mean_mll: float
    stderr_mll: float
    mean_rmse: float
    stderr_rmse: float

    def as_row(self) -> list[Any]:
        return [
            self.method,
            self.runs,
            self.failed,
            f"{self.mean_mll:.6f}",
            f"{self.stderr_mll:.6f}",
            f"{self.mean_rmse:.6f}",
            f"{self.stderr_rmse:.6f}",
        ]


SUMMARY_COLUMNS = (
    "method",
    "runs",
    "failed",
    "mean_mll",
    "stderr_mll",
    "mean_rmse",
    "stderr_rmse",
)


def _mean_stderr(values: list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    t = torch.tensor(values, dtype=torch.float64)
    if len(values) == 1:
        return float(t.mean()), 0.0
    return float(t.mean()), float(t.std(unbiased=True) / math.sqrt(len(values)))


def summarize(records: Sequence[RunRecord]) -> list[MethodSummary]:
    """Media y error estándar de MLL y RMSE por método, en orden de aparición."""
    by_method: dict[str, list[RunRecord]] = {}
    for r in records:
        by_method.setdefault(r.method, []).append(r)
    summaries = []
    for method, runs in by_method.items():
        ok = [r for r in runs if r.succeeded]
        mll = _mean_stderr([float(r.test_mll) for r in ok if r.test_mll is not None])
        rmse = _mean_stderr([float(r.test_rmse) for r in ok if r.test_rmse is not None])
        summaries.append(
            MethodSummary(
                method=method,
                runs=len(runs),
                failed=len(runs) - len(ok),
                mean_mll=mll[0],
                stderr_mll=mll[1],
                mean_rmse=rmse[0],
                stderr_rmse=rmse[1],
            )
        )
    return summaries
