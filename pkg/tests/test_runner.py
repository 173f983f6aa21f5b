"""Pruebas para el runner de experimentos."""

import math

import pytest
import torch

from dgpbench.core.config import ExperimentConfig
from dgpbench.exceptions import InvalidArgumentError
from dgpbench.gp.model import PredictiveMixture
from dgpbench.harness.data import Dataset
from dgpbench.harness.data import Normalization
from dgpbench.harness.data import normalize
from dgpbench.harness.data import split
from dgpbench.harness.persistence import load_model
from dgpbench.harness.runner import CURVES_FILE
from dgpbench.harness.runner import DIAGNOSTICS_FILE
from dgpbench.harness.runner import MODEL_FILE
from dgpbench.harness.runner import RUN_RECORD_FILE
from dgpbench.harness.runner import CheckpointRecorder
from dgpbench.harness.runner import RunRecord
from dgpbench.harness.runner import evaluate
from dgpbench.harness.runner import read_run_record
from dgpbench.harness.runner import run_experiment
from dgpbench.harness.runner import run_repetitions
from dgpbench.harness.runner import summarize
from dgpbench.observability.diagnostics import InMemoryDiagnosticsSink


def _t(values):
    return torch.tensor(values, dtype=torch.float64)


@pytest.fixture
def sine():
    gen = torch.Generator().manual_seed(0)
    X = torch.linspace(-3.0, 3.0, 25, dtype=torch.float64).unsqueeze(1)
    y = 3.0 * torch.sin(X) + 1.0 + 0.1 * torch.randn(25, 1, generator=gen, dtype=torch.float64)
    return Dataset(X=X, y=y, name="sine")


def _config(method, **overrides):
    base = {
        "method": method,
        "num_inducing": 5,
        "num_inducing_mean": 6,
        "num_inducing_cov": 3,
        "burn_in_iters": 20,
        "sampling_iters": 20,
        "thinning": 5,
        "window_capacity": 5,
        "dsvi_iters": 15,
        "prediction_samples": 5,
        "repetitions": 2,
    }
    base.update(overrides)
    return ExperimentConfig(**base)


def _mixture(means, variances):
    return PredictiveMixture(
        means=_t(means).reshape(len(means), -1, 1),
        variances=_t(variances).reshape(len(variances), -1, 1),
    )


class TestEvaluate:
    """Pruebas para las métricas de test."""

    def test_perfect_predictions(self):
        """Prueba RMSE 0 con medias exactas y varianza σ²."""
        mixture = _mixture([[1.0, 2.0]], [[0.1, 0.1]])

        mll, rmse = evaluate(mixture, _t([[1.0], [2.0]]))

        assert rmse == 0.0
        assert mll == pytest.approx(-0.5 * math.log(2 * math.pi * 0.1), abs=1e-10)

    def test_two_component_mixture(self):
        """Prueba la densidad de una mezcla de dos componentes en un punto."""
        mixture = _mixture([[0.0], [2.0]], [[1.0], [1.0]])

        mll, rmse = evaluate(mixture, _t([[1.0]]))

        assert mll == pytest.approx(-1.418939, abs=1e-6)
        assert rmse == pytest.approx(0.0, abs=1e-12)

    def test_denormalization_shift(self):
        """Prueba que desnormalizar con escala s resta log s por punto."""
        s = 4.0
        norm = Normalization(
            x_mean=_t([0.0]), x_std=_t([1.0]), y_mean=_t([10.0]), y_std=_t([s])
        )
        mixture = _mixture([[0.2, -0.5]], [[0.3, 0.7]])
        y_norm = _t([[0.0], [0.1]])

        mll_norm, rmse_norm = evaluate(mixture, y_norm)
        mll, rmse = evaluate(mixture, norm.restore_y(y_norm), norm)

        assert mll == pytest.approx(mll_norm - math.log(s), abs=1e-10)
        assert rmse == pytest.approx(s * rmse_norm, rel=1e-10)


class TestRunExperiment:
    """Pruebas para una ejecución completa."""

    def test_single_layer_dsvi(self, tmp_path, sine):
        """Prueba sgp con artefactos en disco y métricas finitas."""
        record = run_experiment(_config("sgp"), sine, tmp_path)

        assert record.succeeded
        assert (record.num_train, record.num_test) == (20, 5)
        assert math.isfinite(record.test_mll) and math.isfinite(record.test_rmse)
        assert set(record.phase_seconds) == {"dsvi", "predict"}
        for name in (MODEL_FILE, RUN_RECORD_FILE, DIAGNOSTICS_FILE):
            assert (tmp_path / name).exists()
        stored = read_run_record(tmp_path / RUN_RECORD_FILE)
        assert stored.test_mll == record.test_mll

    def test_restored_model_reproduces_metric(self, tmp_path, sine):
        """Prueba que el modelo persistido reproduce la MLL de test."""
        config = _config("dsvi_dgp_decoupled", hidden_layers=1, hidden_width=2)
        record = run_experiment(config, sine, tmp_path)
        _, raw_test = split(sine, config.split_fraction, config.seed)

        trained = load_model(tmp_path / MODEL_FILE, expected=config)
        mll, _ = evaluate(trained.predict(raw_test.X), raw_test.y, trained.normalization)

        assert mll == pytest.approx(record.test_mll, abs=1e-10)

    @pytest.mark.parametrize("optimizer", ["mw_mcem", "mcem", "none"])
    def test_sampler(self, sine, optimizer):
        """Prueba el muestreador con cada optimizador de hiperparámetros."""
        config = _config(
            "sghmc_dgp",
            hidden_layers=1,
            hidden_width=2,
            hyper_optimizer=optimizer,
            mcem_set_size=2,
            mcem_estep_iters=5,
        )

        record = run_experiment(config, sine)

        assert record.succeeded
        assert set(record.phase_seconds) == {"burn_in", "sampling", "predict"}
        assert any(d["stream"] == "sghmc" for d in record.diagnostics)

    def test_deterministic(self, sine):
        """Prueba que misma configuración y semilla dan la misma MLL."""
        config = _config("sghmc_dgp", hidden_layers=1, hidden_width=2)

        a = run_experiment(config, sine)
        b = run_experiment(config, sine)

        assert a.test_mll == pytest.approx(b.test_mll, abs=1e-10)
        assert a.test_rmse == pytest.approx(b.test_rmse, abs=1e-10)

    def test_checkpoints_written_as_curves(self, tmp_path, sine):
        """Prueba que los checkpoints generan curvas con reloj no decreciente."""
        config = _config("sghmc_dgp", checkpoint_every=10)

        record = run_experiment(config, sine, tmp_path)

        checkpoints = [d for d in record.diagnostics if d["stream"] == "checkpoint"]
        assert [d["iteration"] for d in checkpoints] == [9, 19, 29, 39]
        clocks = [d["wall_clock_s"] for d in checkpoints]
        assert clocks == sorted(clocks)
        assert (tmp_path / CURVES_FILE).exists()

    def test_errors_raised(self, sine):
        """Prueba que los errores se propagan por defecto."""
        config = _config("sgp", split_mode="fixed", fixed_test_rows=[100])

        with pytest.raises(InvalidArgumentError):
            run_experiment(config, sine)

    def test_errors_recorded(self, tmp_path, sine):
        """Prueba que con raise_errors=False el error queda en el registro."""
        config = _config("sgp", split_mode="fixed", fixed_test_rows=[100])

        record = run_experiment(config, sine, tmp_path, raise_errors=False)

        assert not record.succeeded
        assert record.error["exit_code"] == 2
        assert record.error["error"]["exception"] == "INVALID_ARGUMENT"
        assert read_run_record(tmp_path / RUN_RECORD_FILE).error == record.error


class TestRepetitions:
    """Pruebas para las repeticiones y su resumen."""

    def test_one_record_per_seed(self, tmp_path, sine):
        """Prueba una ejecución por semilla con su propio directorio."""
        records = run_repetitions(_config("sgp", seed=3), sine, output_dir=tmp_path)

        assert [r.seed for r in records] == [3, 4]
        assert (tmp_path / "seed_3" / RUN_RECORD_FILE).exists()
        assert (tmp_path / "seed_4" / RUN_RECORD_FILE).exists()

    def test_explicit_seeds(self, sine):
        """Prueba semillas explícitas en el orden dado."""
        records = run_repetitions(_config("sgp"), sine, seeds=[7, 1])

        assert [r.seed for r in records] == [7, 1]

    def test_workers_positive(self, sine):
        """Prueba que se necesita al menos un proceso."""
        with pytest.raises(InvalidArgumentError):
            run_repetitions(_config("sgp"), sine, workers=0)

    def test_summarize(self):
        """Prueba media, error estándar y fallos por método."""
        def record(method, mll, rmse, error=None):
            return RunRecord(
                config={},
                method=method,
                dataset="d",
                seed=0,
                test_mll=mll,
                test_rmse=rmse,
                error=error,
            )

        records = [
            record("sgp", -1.0, 0.5),
            record("sgp", -2.0, 0.7),
            record("sgp", None, None, error={"exit_code": 3}),
            record("dsvi_dgp", -0.5, 0.2),
        ]

        sgp, dsvi = summarize(records)

        assert (sgp.method, sgp.runs, sgp.failed) == ("sgp", 3, 1)
        assert sgp.mean_mll == pytest.approx(-1.5)
        assert sgp.stderr_mll == pytest.approx(math.sqrt(0.5) / math.sqrt(2))
        assert (dsvi.runs, dsvi.stderr_mll) == (1, 0.0)


class TestCheckpointRecorder:
    """Pruebas para el evaluador periódico."""

    def test_requires_normalized_data(self, sine):
        """Prueba que los datos de test deben estar normalizados."""
        with pytest.raises(InvalidArgumentError, match="normalized"):
            CheckpointRecorder(sine, 10, InMemoryDiagnosticsSink())

    def test_interval_positive(self, sine):
        """Prueba que el intervalo debe ser positivo."""
        _, test = normalize(*split(sine, 0.8, seed=0))

        with pytest.raises(InvalidArgumentError):
            CheckpointRecorder(test, 0, InMemoryDiagnosticsSink())
