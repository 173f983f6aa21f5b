"""
Artefactos de modelo versionados.

El archivo es JSON con la cabecera ``magic`` y ``format_version``; el resto
se valida con pydantic para que cualquier campo ausente o mal formado se
nombre en el error de carga.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import torch
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import ValidationError

from ..core.config import ExperimentConfig
from ..exceptions import DGPBenchError
from ..exceptions import InvalidStateError
from ..exceptions import ModelLoadError
from ..gp.kernels import DTYPE
from ..gp.kernels import KernelParams
from ..gp.layer import LayerState
from ..gp.layer import MeanFnKind
from ..gp.layer import MeanFnSpec
from ..gp.model import DGPModel
from ..gp.model import FlatLatent
from ..gp.model import PredictiveMixture
from ..gp.model import predict_mixture
from ..inference.sghmc import SampleWindow
from ..observability.logging import get_logger
from ..variational.coupled import CoupledVarParams
from ..variational.decoupled import DecoupledVarParams
from ..variational.decoupled import MeanParameterization
from ..variational.dsvi import VariationalState
from ..variational.dsvi import predict_variational
from .data import Normalization

logger = get_logger(__name__)

MAGIC = "DGPBENCH-MODEL"
FORMAT_VERSION = 1

Matrix = list[list[float]]


@dataclass(frozen=True)
class TrainedModel:
    """
    Resultado de un entrenamiento: modelo, normalización y la ventana de
    muestras (muestreadores) o los parámetros variacionales (DSVI).
    """

    config: ExperimentConfig
    model: DGPModel
    normalization: Normalization
    window: SampleWindow | None = None
    variational: VariationalState | None = None
    prediction_seed: int = 0

    def predict(
        self, X_star: torch.Tensor, rng: torch.Generator | None = None
    ) -> PredictiveMixture:
        """
        Mezcla predictiva, en unidades normalizadas, para entradas en
        unidades originales. Sin ``rng`` se usa ``prediction_seed``.
        """
        if rng is None:
            rng = torch.Generator().manual_seed(self.prediction_seed)
        X = self.normalization.apply_x(torch.as_tensor(X_star, dtype=DTYPE))
        if self.window is not None:
            return predict_mixture(X, self.window, self.model, rng)
        if self.variational is not None:
            return predict_variational(
                X, self.model, self.variational, rng, self.config.prediction_samples
            )
        raise InvalidStateError(reason="trained model has neither samples nor variational state")


class MeanFnArtifact(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: str
    input_dim: int
    output_dim: int
    projection_matrix: Matrix | None = None


class LayerArtifact(BaseModel):
    model_config = ConfigDict(extra="forbid")

    Z: Matrix
    log_lengthscales: list[float]
    log_signal_variance: float
    mean_fn: MeanFnArtifact


class NormalizationArtifact(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x_mean: list[float]
    x_std: list[float]
    y_mean: list[float]
    y_std: list[float]


class CoupledArtifact(BaseModel):
    model_config = ConfigDict(extra="forbid")

    m: Matrix
    S_chol: Matrix


class DecoupledArtifact(BaseModel):
    model_config = ConfigDict(extra="forbid")

    Z_a: Matrix
    Z_b: Matrix
    mean_param: Matrix
    B_chol: Matrix


class VariationalArtifact(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mean_parameterization: str
    coupled: list[CoupledArtifact] = []
    decoupled: list[DecoupledArtifact] = []


class ModelArtifact(BaseModel):
    """Esquema del archivo de modelo."""

    model_config = ConfigDict(extra="forbid")

    magic: str
    format_version: int
    config: dict[str, Any]
    prediction_seed: int
    num_data: int
    jitter: float
    log_noise_variance: float
    normalization: NormalizationArtifact
    layers: list[LayerArtifact]
    samples: list[list[float]] | None = None
    variational: VariationalArtifact | None = None


def _t(values: Any) -> torch.Tensor:
    return torch.tensor(values, dtype=DTYPE)


def _layer_artifact(layer: LayerState) -> LayerArtifact:
    W = layer.mean_fn.projection_matrix
    return LayerArtifact(
        Z=layer.Z.detach().tolist(),
        log_lengthscales=layer.kernel.log_lengthscales.detach().tolist(),
        log_signal_variance=float(layer.kernel.log_signal_variance.detach()),
        mean_fn=MeanFnArtifact(
            kind=layer.mean_fn.kind.value,
            input_dim=layer.mean_fn.input_dim,
            output_dim=layer.mean_fn.output_dim,
            projection_matrix=None if W is None else W.detach().tolist(),
        ),
    )


def _variational_artifact(state: VariationalState) -> VariationalArtifact:
    artifact = VariationalArtifact(mean_parameterization=state.mean_parameterization.value)
    for vp in state.layers:
        if isinstance(vp, CoupledVarParams):
            artifact.coupled.append(CoupledArtifact(m=vp.m.tolist(), S_chol=vp.S_chol.tolist()))
        else:
            artifact.decoupled.append(
                DecoupledArtifact(
                    Z_a=vp.Z_a.tolist(),
                    Z_b=vp.Z_b.tolist(),
                    mean_param=vp.mean_param.tolist(),
                    B_chol=vp.B_chol.tolist(),
                )
            )
    return artifact


def save_model(trained: TrainedModel, path: str | Path) -> Path:
    """
    Escribe el artefacto de ``trained`` en ``path``.

    Returns
    -------
    Path
        Ruta escrita.
    """
    path = Path(path)
    model = trained.model.detach()
    norm = trained.normalization
    artifact = ModelArtifact(
        magic=MAGIC,
        format_version=FORMAT_VERSION,
        config=trained.config.snapshot(),
        prediction_seed=trained.prediction_seed,
        num_data=model.num_data,
        jitter=model.jitter,
        log_noise_variance=float(model.log_noise_variance),
        normalization=NormalizationArtifact(
            x_mean=norm.x_mean.tolist(),
            x_std=norm.x_std.tolist(),
            y_mean=norm.y_mean.tolist(),
            y_std=norm.y_std.tolist(),
        ),
        layers=[_layer_artifact(layer) for layer in model.layers],
        samples=None if trained.window is None else [s.values.tolist() for s in trained.window],
        variational=(
            None if trained.variational is None else _variational_artifact(trained.variational)
        ),
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(artifact.model_dump(mode="json")), encoding="utf-8")
    logger.info("model saved", path=str(path), layers=model.num_layers)
    return path


def _field_name(error: ValidationError) -> str:
    first = error.errors()[0]
    return ".".join(str(part) for part in first["loc"]) or "<root>"


def _read_artifact(path: Path) -> ModelArtifact:
    if not path.exists():
        raise ModelLoadError(reason=f"file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelLoadError(reason=f"file is truncated or not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ModelLoadError(reason="top-level value must be an object")
    if data.get("magic") != MAGIC:
        raise ModelLoadError(reason=f"expected magic header {MAGIC!r}", field="magic")
    if data.get("format_version") != FORMAT_VERSION:
        raise ModelLoadError(
            reason=(
                f"unsupported version {data.get('format_version')!r}, "
                f"this build reads version {FORMAT_VERSION}"
            ),
            field="format_version",
        )
    try:
        return ModelArtifact.model_validate(data)
    except ValidationError as e:
        raise ModelLoadError(reason=e.errors()[0]["msg"], field=_field_name(e)) from e


def _check_widths(artifact: ModelArtifact, expected: ExperimentConfig) -> None:
    widths = [layer.mean_fn.output_dim for layer in artifact.layers]
    wanted = [*expected.hidden_widths(), len(artifact.normalization.y_mean)]
    if len(widths) != len(wanted):
        raise ModelLoadError(
            reason=f"artifact has {len(widths)} layers, configuration expects {len(wanted)}",
            field="layers",
        )
    for i, (got, want) in enumerate(zip(widths, wanted, strict=True)):
        if got != want:
            raise ModelLoadError(
                reason=f"layer {i} has width {got}, configuration expects {want}",
                field=f"layers[{i}].output_dim",
            )


def _restore_layer(i: int, layer: LayerArtifact) -> LayerState:
    try:
        spec = layer.mean_fn
        W = None if spec.projection_matrix is None else _t(spec.projection_matrix)
        mean_fn = MeanFnSpec(
            kind=MeanFnKind(spec.kind),
            input_dim=spec.input_dim,
            output_dim=spec.output_dim,
            projection_matrix=W,
        )
        Z = _t(layer.Z)
        return LayerState(
            Z=Z,
            u=torch.zeros(Z.shape[0], spec.output_dim, dtype=DTYPE),
            kernel=KernelParams(
                log_lengthscales=_t(layer.log_lengthscales),
                log_signal_variance=_t(layer.log_signal_variance),
            ),
            mean_fn=mean_fn,
        )
    except (DGPBenchError, ValueError, RuntimeError) as e:
        raise ModelLoadError(reason=str(e), field=f"layers[{i}]") from e


def _restore_variational(artifact: VariationalArtifact) -> VariationalState:
    layers: list[CoupledVarParams | DecoupledVarParams] = []
    try:
        for c in artifact.coupled:
            layers.append(CoupledVarParams(m=_t(c.m), S_chol=_t(c.S_chol)))
        for d in artifact.decoupled:
            layers.append(
                DecoupledVarParams(
                    Z_a=_t(d.Z_a), Z_b=_t(d.Z_b), mean_param=_t(d.mean_param), B_chol=_t(d.B_chol)
                )
            )
        return VariationalState(tuple(layers), MeanParameterization(artifact.mean_parameterization))
    except (DGPBenchError, ValueError, RuntimeError) as e:
        raise ModelLoadError(reason=str(e), field="variational") from e


def load_model(path: str | Path, expected: ExperimentConfig | None = None) -> TrainedModel:
    """
    Restaura un artefacto escrito por ``save_model``.

    Parameters
    ----------
    path : str | Path
        Archivo de modelo.
    expected : ExperimentConfig, optional
        Si se indica, las anchuras de capa deben coincidir con las suyas.

    Raises
    ------
    ModelLoadError
        Cabecera o versión incorrectas, archivo truncado, campos ausentes o
        formas incompatibles; ``field`` nombra el campo o la capa.
    """
    path = Path(path)
    artifact = _read_artifact(path)
    if expected is not None:
        _check_widths(artifact, expected)
    try:
        config = ExperimentConfig.model_validate(artifact.config)
    except ValidationError as e:
        raise ModelLoadError(reason=e.errors()[0]["msg"], field="config") from e

    layers = tuple(_restore_layer(i, layer) for i, layer in enumerate(artifact.layers))
    try:
        model = DGPModel(
            layers=layers,
            log_noise_variance=_t(artifact.log_noise_variance),
            num_data=artifact.num_data,
            jitter=artifact.jitter,
        )
    except DGPBenchError as e:
        raise ModelLoadError(reason=str(e), field="layers") from e

    window = None
    if artifact.samples is not None:
        template = model.current_latent()
        window = SampleWindow(max(1, len(artifact.samples)))
        for k, values in enumerate(artifact.samples):
            if len(values) != template.size:
                raise ModelLoadError(
                    reason=f"sample has {len(values)} entries, model expects {template.size}",
                    field=f"samples[{k}]",
                )
            window.push(FlatLatent(values=_t(values), layout=template.layout))

    variational = None
    if artifact.variational is not None:
        variational = _restore_variational(artifact.variational)
        if len(variational.layers) != model.num_layers:
            raise ModelLoadError(
                reason="variational state does not match the number of layers",
                field="variational",
            )

    norm = artifact.normalization
    trained = TrainedModel(
        config=config,
        model=model,
        normalization=Normalization(
            x_mean=_t(norm.x_mean),
            x_std=_t(norm.x_std),
            y_mean=_t(norm.y_mean),
            y_std=_t(norm.y_std),
        ),
        window=window,
        variational=variational,
        prediction_seed=artifact.prediction_seed,
    )
    logger.info("model loaded", path=str(path), layers=model.num_layers)
    return trained
