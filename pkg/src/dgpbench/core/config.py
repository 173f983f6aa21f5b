"""Configuración de experimentos de dgpbench."""

from collections.abc import Iterable
from enum import Enum
from pathlib import Path
from typing import Any

import tomli
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import ValidationError
from pydantic import model_validator

from ..exceptions import ConfigError

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "HyperOptimizer",
    "Method",
    "SplitMode",
    "load_config",
    "parse_override",
]


class Method(str, Enum):
    """Métodos de inferencia disponibles."""

    SGHMC_DGP = "sghmc_dgp"
    DSVI_DGP = "dsvi_dgp"
    DSVI_DGP_DECOUPLED = "dsvi_dgp_decoupled"
    SGP = "sgp"
    DEC_SGP = "dec_sgp"

    @property
    def is_sampler(self) -> bool:
        return self is Method.SGHMC_DGP

    @property
    def is_decoupled(self) -> bool:
        return self in (Method.DSVI_DGP_DECOUPLED, Method.DEC_SGP)

    @property
    def single_layer(self) -> bool:
        return self in (Method.SGP, Method.DEC_SGP)


class SplitMode(str, Enum):
    RANDOM = "random"
    FIXED = "fixed"


class HyperOptimizer(str, Enum):
    MW_MCEM = "mw_mcem"
    MCEM = "mcem"
    NONE = "none"


class ExperimentConfig(BaseModel):
    """
    Configuración completa de un experimento.

    Los valores por defecto reproducen el protocolo completo; ``desk_scale``
    devuelve una copia con presupuestos reducidos.

    Examples
    --------
    >>> config = ExperimentConfig(method="sghmc_dgp", hidden_layers=1)
    >>> config.num_samples
    200
    """

    model_config = ConfigDict(extra="forbid", frozen=True, use_enum_values=False)

    name: str = "experiment"
    method: Method = Method.SGHMC_DGP
    dataset: str | None = None
    target_columns: list[str] = Field(default_factory=list)
    split_mode: SplitMode = SplitMode.RANDOM
    split_fraction: float = Field(default=0.8, gt=0.0, lt=1.0)
    fixed_test_rows: list[int] = Field(default_factory=list)

    hidden_layers: int = Field(default=0, ge=0, le=4)
    hidden_width: int = Field(default=10, ge=1)
    hidden_mean_function: str = Field(default="auto", pattern="^(auto|zero)$")
    num_inducing: int = Field(default=100, ge=1)
    num_inducing_mean: int = Field(default=300, ge=1)
    num_inducing_cov: int = Field(default=50, ge=1)
    mean_parameterization: str = Field(default="GP", pattern="^(CB|GP|GPcent)$")
    init_noise_variance: float = Field(default=0.01, gt=0.0)
    jitter: float = Field(default=1e-6, ge=0.0)

    learning_rate: float = Field(default=0.01, ge=0.0)
    minibatch_size: int = Field(default=10000, ge=1)

    burn_in_iters: int = Field(default=20000, ge=1)
    sampling_iters: int = Field(default=10000, ge=1)
    thinning: int = Field(default=50, ge=1)
    window_capacity: int = Field(default=300, ge=1)
    step_size: float = Field(default=0.01, gt=0.0)
    decay: float = Field(default=0.05, ge=0.0, lt=1.0)
    sghmc_integrator: str = Field(default="explicit", pattern="^(explicit|semi_implicit)$")
    hyper_optimizer: HyperOptimizer = HyperOptimizer.MW_MCEM
    mcem_set_size: int = Field(default=10, ge=1)
    mcem_estep_iters: int = Field(default=500, ge=1)

    dsvi_iters: int = Field(default=20000, ge=0)
    dsvi_samples: int = Field(default=1, ge=1)
    train_hyperparameters: bool = True

    prediction_samples: int = Field(default=100, ge=1)
    checkpoint_every: int = Field(default=0, ge=0)
    repetitions: int = Field(default=10, ge=1)
    num_threads: int = Field(default=1, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_consistency(self) -> "ExperimentConfig":
        if self.sampling_iters < self.thinning:
            raise ValueError("sampling_iters must be at least thinning")
        if self.split_mode is SplitMode.FIXED and not self.fixed_test_rows:
            raise ValueError("split_mode 'fixed' requires fixed_test_rows")
        if self.method.is_decoupled and self.num_inducing_cov > self.num_inducing_mean:
            raise ValueError("decoupled methods require num_inducing_cov <= num_inducing_mean")
        return self

    @property
    def num_samples(self) -> int:
        """Muestras guardadas en la fase de muestreo."""
        return self.sampling_iters // self.thinning

    @property
    def effective_hidden_layers(self) -> int:
        return 0 if self.method.single_layer else self.hidden_layers

    def hidden_widths(self) -> list[int]:
        return [self.hidden_width] * self.effective_hidden_layers

    def desk_scale(self) -> "ExperimentConfig":
        """Presupuestos reducidos para ejecuciones de escritorio."""
        return self.model_copy(
            update={
                "burn_in_iters": 2000,
                "sampling_iters": 1000,
                "thinning": 10,
                "dsvi_iters": 2000,
                "repetitions": 5,
            }
        )

    def with_overrides(self, overrides: dict[str, Any]) -> "ExperimentConfig":
        """Aplica sobrescrituras validando de nuevo el conjunto."""
        data = self.model_dump()
        data.update(overrides)
        return _validate(data)

    def snapshot(self) -> dict[str, Any]:
        return self.model_dump(mode="json")


def _validate(data: dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}"
            for err in e.errors()
        )
        raise ConfigError(reason=problems) from e


def parse_override(assignment: str) -> tuple[str, Any]:
    """
    Interpreta ``clave=valor``. El valor se lee como un valor TOML y, si no lo
    es, como texto literal.

    Examples
    --------
    >>> parse_override("hidden_layers=2")
    ('hidden_layers', 2)
    >>> parse_override("method=dsvi_dgp")
    ('method', 'dsvi_dgp')
    """
    if "=" not in assignment:
        raise ConfigError(reason=f"override '{assignment}' is not of the form key=value")
    key, raw = assignment.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(reason=f"override '{assignment}' has an empty key")
    raw = raw.strip()
    try:
        value = tomli.loads(f"value = {raw}")["value"]
    except tomli.TOMLDecodeError:
        value = raw
    return key, value


def load_config(
    path: Path | None = None,
    overrides: Iterable[str] = (),
    desk_scale: bool = False,
) -> ExperimentConfig:
    """
    Carga la configuración desde un archivo TOML y aplica las sobrescrituras.

    Las claves pueden estar al nivel superior o en una tabla ``[experiment]``.
    El preset ``desk_scale`` se aplica antes que las sobrescrituras.

    Raises
    ------
    ConfigError
        Archivo inexistente, TOML inválido o claves desconocidas.
    """
    data: dict[str, Any] = {}
    if path is not None:
        if not path.exists():
            raise ConfigError(reason="Configuration file not found")
        try:
            with open(path, "rb") as f:
                raw = tomli.load(f)
        except tomli.TOMLDecodeError as e:
            raise ConfigError(reason=f"Invalid TOML configuration: {e}") from e
        data = dict(raw.get("experiment", raw))

    config = _validate(data)
    if desk_scale:
        config = config.desk_scale()

    parsed = dict(parse_override(item) for item in overrides)
    if parsed:
        config = config.with_overrides(parsed)
    return config
