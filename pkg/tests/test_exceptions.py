"""Pruebas para la jerarquía de excepciones."""

import pytest

from dgpbench.exceptions import ConfigError
from dgpbench.exceptions import DatasetParseError
from dgpbench.exceptions import DegenerateInputError
from dgpbench.exceptions import DGPBenchError
from dgpbench.exceptions import InvalidArgumentError
from dgpbench.exceptions import InvalidStateError
from dgpbench.exceptions import ModelLoadError
from dgpbench.exceptions import NumericalFailureError


class TestExitCodes:
    """Pruebas para los códigos de salida de cada error."""

    @pytest.mark.parametrize(
        ("error", "code"),
        [
            (InvalidArgumentError(reason="x"), 2),
            (DegenerateInputError(reason="x"), 2),
            (NumericalFailureError(reason="x"), 3),
            (InvalidStateError(reason="x"), 4),
            (DatasetParseError(reason="x"), 5),
            (ModelLoadError(reason="x"), 6),
            (ConfigError(reason="x"), 7),
        ],
    )
    def test_exit_code(self, error, code):
        """Prueba que cada error lleva su código y hereda de la base."""
        assert error.exit_code == code
        assert isinstance(error, DGPBenchError)


class TestMessages:
    """Pruebas para el formato de los mensajes."""

    def test_dataset_parse_error_position(self):
        """Prueba que el mensaje nombra fila y columna."""
        error = DatasetParseError(reason="not a number: 'abc'", row=2, column=3)

        assert str(error) == "Dataset parse error at (2,3): not a number: 'abc'"
        assert (error.row, error.column) == (2, 3)

    def test_model_load_error_field(self):
        """Prueba que el mensaje nombra el campo."""
        error = ModelLoadError(reason="missing", field="layers[1].Z")

        assert "field 'layers[1].Z'" in str(error)
        assert error.field == "layers[1].Z"

    def test_numerical_failure_jitter(self):
        """Prueba que el último jitter aparece en el mensaje."""
        error = NumericalFailureError(reason="cholesky failed", jitter=0.01)

        assert "1.000e-02" in str(error)
        assert error.jitter == 0.01

    def test_to_dict(self):
        """Prueba la forma serializable del error."""
        data = InvalidArgumentError(reason="negative iterations").to_dict()

        assert data == {
            "error": {
                "exception": "INVALID_ARGUMENT",
                "message": "Invalid argument: negative iterations",
                "context": {"reason": "negative iterations"},
            },
            "exit_code": 2,
        }
