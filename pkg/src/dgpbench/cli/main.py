"""CLI principal de dgpbench."""

import json
from pathlib import Path
from typing import Annotated

import torch
import typer

from ..analysis.gaussianity import gaussianity_report
from ..core.config import ExperimentConfig
from ..core.config import Method
from ..core.config import load_config
from ..exceptions import DGPBenchError
from ..exceptions import InvalidArgumentError
from ..exceptions import InvalidStateError
from ..harness.curves import emit_curves
from ..harness.curves import read_curves
from ..harness.data import Dataset
from ..harness.data import load_csv
from ..harness.persistence import load_model
from ..harness.runner import CURVES_FILE
from ..harness.runner import SUMMARY_COLUMNS
from ..harness.runner import evaluate as evaluate_predictions
from ..harness.runner import run_experiment
from ..harness.runner import run_repetitions
from ..harness.runner import split_dataset
from ..harness.runner import summarize
from ..observability.logging import LoggingConfig
from ..observability.logging import LogLevel
from ..observability.logging import configure_logging
from ..variational.dsvi import variational_window

app = typer.Typer(
    name="dgpbench",
    help="Benchmarks de inferencia para Deep Gaussian Processes",
    no_args_is_help=True,
)

ConfigOption = Annotated[
    Path | None, typer.Option("--config", "-c", help="Archivo TOML de configuración")
]
SetOption = Annotated[
    list[str] | None, typer.Option("--set", "-s", help="Sobrescritura clave=valor (repetible)")
]
DeskScaleOption = Annotated[
    bool, typer.Option("--desk-scale", help="Presupuestos reducidos de escritorio")
]
DataOption = Annotated[
    Path | None, typer.Option("--data", "-d", help="CSV de datos (sustituye a 'dataset')")
]


def _fail(error: DGPBenchError) -> typer.Exit:
    """Escribe el error como una línea JSON en stderr y devuelve la salida con su código."""
    typer.echo(json.dumps(error.to_dict(), default=str), err=True)
    return typer.Exit(error.exit_code)


def _load_dataset(config: ExperimentConfig, data: Path | None) -> Dataset:
    path = data or (Path(config.dataset) if config.dataset else None)
    if path is None:
        raise InvalidArgumentError(
            reason="no dataset given: pass --data or set 'dataset' in the configuration"
        )
    return load_csv(path, config.target_columns)


@app.callback()
def main(
    log_level: Annotated[str, typer.Option("--log-level", help="Nivel de logging")] = "WARNING",
    log_format: Annotated[str, typer.Option("--log-format", help="Formato: text o json")] = "text",
) -> None:
    """Configura el logging antes de cualquier comando."""
    try:
        config = LoggingConfig(level=LogLevel.from_string(log_level), format=log_format)
    except ValueError as e:
        typer.echo(f"[ERROR] {e}", err=True)
        raise typer.Exit(2) from e
    configure_logging(config)


@app.command()
def train(
    config_path: ConfigOption = None,
    overrides: SetOption = None,
    desk_scale: DeskScaleOption = False,
    data: DataOption = None,
    output: Annotated[Path, typer.Option("--output", "-o", help="Directorio de salida")] = Path(
        "runs/latest"
    ),
) -> None:
    """Entrena un método y guarda modelo, diagnósticos y registro."""
    try:
        config = load_config(config_path, overrides or [], desk_scale)
        dataset = _load_dataset(config, data)
        record = run_experiment(config, dataset, output)
    except DGPBenchError as e:
        raise _fail(e) from e
    typer.echo(
        f"[OK] {record.method} on {record.dataset}: "
        f"test_mll={record.test_mll:.6f} test_rmse={record.test_rmse:.6f}"
    )
    typer.echo(f"Artefactos en: {output}")


@app.command()
def evaluate(
    model_path: Annotated[Path, typer.Argument(help="Archivo de modelo")],
    data: DataOption = None,
    config_path: ConfigOption = None,
    all_rows: Annotated[
        bool, typer.Option("--all-rows", help="Evalúa todas las filas en vez del split de test")
    ] = False,
) -> None:
    """Evalúa un modelo guardado sobre el split de test de su configuración."""
    try:
        expected = load_config(config_path) if config_path is not None else None
        trained = load_model(model_path, expected)
        dataset = _load_dataset(trained.config, data)
        test = dataset if all_rows else split_dataset(trained.config, dataset)[1]
        mixture = trained.predict(test.X)
        mll, rmse = evaluate_predictions(mixture, test.y, trained.normalization)
    except DGPBenchError as e:
        raise _fail(e) from e
    typer.echo(f"test_mll={mll:.6f} test_rmse={rmse:.6f} rows={test.num_rows}")


@app.command("analyze-posterior")
def analyze_posterior(
    model_path: Annotated[Path, typer.Argument(help="Archivo de modelo")],
    coords: Annotated[int, typer.Option("--coords", help="Coordenadas a contrastar")] = 100,
    alpha: Annotated[float, typer.Option("--alpha", help="Umbral antes de Bonferroni")] = 1e-5,
    samples: Annotated[
        int, typer.Option("--samples", help="Extracciones de q(u) para modelos variacionales")
    ] = 200,
    seed: Annotated[int, typer.Option("--seed", help="Semilla de la selección")] = 0,
    output: Annotated[
        Path | None, typer.Option("--output", "-o", help="Archivo de la tabla")
    ] = None,
) -> None:
    """Test de curtosis con corrección de Bonferroni sobre la posterior guardada."""
    try:
        trained = load_model(model_path)
        window = trained.window
        if window is None:
            if trained.variational is None:
                raise InvalidStateError(reason="model has neither samples nor variational state")
            rng = torch.Generator().manual_seed(seed)
            window = variational_window(trained.variational, trained.model, samples, rng)
        report = gaussianity_report(
            window,
            n_coords=min(coords, window.as_matrix().shape[1]),
            alpha=alpha,
            rng=seed,
            label=trained.config.name,
        )
    except DGPBenchError as e:
        raise _fail(e) from e
    table = report.to_table()
    if output is not None:
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(table, encoding="utf-8")
    else:
        typer.echo(table, nl=False)
    typer.echo(
        f"[OK] {len(report.rejections)}/{report.num_coords} coordenadas rechazadas "
        f"(umbral {report.corrected_threshold:.3e})",
        err=output is None,
    )


@app.command()
def compare(
    methods: Annotated[
        str, typer.Option("--methods", "-m", help="Métodos separados por comas")
    ] = "sghmc_dgp,dsvi_dgp",
    config_path: ConfigOption = None,
    overrides: SetOption = None,
    desk_scale: DeskScaleOption = False,
    data: DataOption = None,
    workers: Annotated[int, typer.Option("--workers", "-w", help="Procesos en paralelo")] = 1,
    output: Annotated[Path, typer.Option("--output", "-o", help="Directorio de salida")] = Path(
        "runs/compare"
    ),
) -> None:
    """Ejecuta las repeticiones de varios métodos y resume MLL y RMSE."""
    try:
        base = load_config(config_path, overrides or [], desk_scale)
        dataset = _load_dataset(base, data)
        names = [m.strip() for m in methods.split(",") if m.strip()]
        valid = {m.value for m in Method}
        unknown = [m for m in names if m not in valid]
        if not names or unknown:
            raise InvalidArgumentError(
                reason=f"unknown methods {unknown}; choose from {sorted(valid)}"
            )
        records = []
        for name in names:
            config = base.with_overrides({"method": name})
            records += run_repetitions(config, dataset, workers=workers, output_dir=output / name)
    except DGPBenchError as e:
        raise _fail(e) from e

    rows = [",".join(SUMMARY_COLUMNS)]
    rows += [",".join(str(v) for v in s.as_row()) for s in summarize(records)]
    table = "\n".join(rows) + "\n"
    output.mkdir(parents=True, exist_ok=True)
    (output / "summary.csv").write_text(table, encoding="utf-8")
    typer.echo(table, nl=False)


@app.command("emit-curves")
def emit_curves_command(
    run_dirs: Annotated[list[Path], typer.Argument(help="Directorios de ejecuciones")],
    output: Annotated[Path, typer.Option("--output", "-o", help="CSV combinado")] = Path(
        "curves.csv"
    ),
) -> None:
    """Combina las curvas de varias ejecuciones en un único CSV."""
    try:
        points = []
        for run_dir in run_dirs:
            path = run_dir / CURVES_FILE if run_dir.is_dir() else run_dir
            points += read_curves(path)
        emit_curves(points, output)
    except DGPBenchError as e:
        raise _fail(e) from e
    typer.echo(f"[OK] {len(points)} filas escritas en {output}")


if __name__ == "__main__":
    app()
