"""Problema de juguete de 7 puntos con dos modos espejo."""

import torch

from ..core.config import ExperimentConfig
from ..core.config import Method
from ..exceptions import InvalidArgumentError
from ..gp.kernels import DTYPE
from ..gp.model import DGPModel
from .data import Dataset

TOY_INPUTS = (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0)


def toy_dataset() -> Dataset:
    """
    Objetivo par y = x²/4.5 − 1 sobre x = −3…3.

    Como y(x) = y(−x), una capa oculta f₁ y su reflejo −f₁ explican los
    datos igual de bien.
    """
    X = torch.tensor(TOY_INPUTS, dtype=DTYPE).unsqueeze(1)
    y = X**2 / 4.5 - 1.0
    return Dataset(X=X, y=y, name="toy", feature_names=("x",), target_names=("y",))


def toy_config(method: Method | str = Method.SGHMC_DGP, seed: int = 0) -> ExperimentConfig:
    """DGP de dos capas con una unidad oculta y media cero en la capa oculta."""
    return ExperimentConfig(
        name="toy",
        method=Method(method),
        hidden_layers=1,
        hidden_width=1,
        hidden_mean_function="zero",
        num_inducing=7,
        num_inducing_mean=7,
        num_inducing_cov=7,
        minibatch_size=7,
        burn_in_iters=2000,
        sampling_iters=2000,
        thinning=10,
        window_capacity=50,
        dsvi_iters=2000,
        prediction_samples=50,
        seed=seed,
    )


def toy_reference_direction(model: DGPModel) -> torch.Tensor:
    """
    Dirección Modo A − Modo B sobre la latente aplanada.

    En el Modo A la capa oculta crece con x y en el B decrece, así que la
    diferencia en las salidas inducidas de la primera capa es proporcional
    a sus entradas Z₁; el resto de capas queda a cero.
    """
    if model.num_layers < 2:
        raise InvalidArgumentError(reason="the toy direction needs at least one hidden layer")
    first = model.layers[0]
    if first.input_dim != 1:
        raise InvalidArgumentError(reason="the toy direction needs a one-dimensional input")
    blocks = [first.Z.detach().expand(first.num_inducing, first.output_dim)]
    blocks += [torch.zeros_like(layer.u) for layer in model.layers[1:]]
    return torch.cat([b.reshape(-1) for b in blocks])
