"""Pruebas para el problema de juguete bimodal."""

import pytest
import torch

from dgpbench.core.config import Method
from dgpbench.exceptions import InvalidArgumentError
from dgpbench.gp.model import init_dgp_model
from dgpbench.harness.toy import toy_config
from dgpbench.harness.toy import toy_dataset
from dgpbench.harness.toy import toy_reference_direction


class TestToyDataset:
    """Pruebas para los datos de juguete."""

    def test_seven_symmetric_points(self):
        """Prueba 7 puntos con objetivo par."""
        ds = toy_dataset()

        assert ds.num_rows == 7
        assert torch.allclose(ds.y, torch.flip(ds.y, dims=[0]))

    def test_values(self):
        """Prueba y(0) = −1 e y(±3) = 1."""
        y = toy_dataset().y.reshape(-1)

        assert float(y[3]) == pytest.approx(-1.0)
        assert float(y[0]) == pytest.approx(1.0)
        assert float(y[6]) == pytest.approx(1.0)


class TestToyConfig:
    """Pruebas para la configuración de juguete."""

    def test_two_layer_single_unit(self):
        """Prueba una capa oculta de una unidad con media cero."""
        config = toy_config(Method.DSVI_DGP, seed=4)

        assert config.method is Method.DSVI_DGP
        assert config.hidden_widths() == [1]
        assert config.hidden_mean_function == "zero"
        assert config.seed == 4
        assert config.num_inducing == 7


class TestToyReferenceDirection:
    """Pruebas para la dirección Modo A − Modo B."""

    def test_direction_follows_first_layer_inputs(self):
        """Prueba que la dirección es Z₁ en la primera capa y cero después."""
        ds = toy_dataset()
        model = init_dgp_model(
            ds.X, 1, [1], 7, torch.Generator().manual_seed(0), hidden_mean_function="zero"
        )

        direction = toy_reference_direction(model)

        assert direction.shape[0] == model.current_latent().size
        assert torch.equal(direction[:7], model.layers[0].Z.reshape(-1))
        assert bool((direction[7:] == 0).all())

    def test_needs_hidden_layer(self):
        """Prueba que un GP de una capa no tiene dirección de modos."""
        ds = toy_dataset()
        model = init_dgp_model(ds.X, 1, [], 7, torch.Generator().manual_seed(0))

        with pytest.raises(InvalidArgumentError, match="hidden layer"):
            toy_reference_direction(model)
