"""Pruebas para la carga de datos, particiones y normalización."""

import pytest
import torch

from dgpbench.exceptions import DatasetParseError
from dgpbench.exceptions import InvalidArgumentError
from dgpbench.harness.data import Dataset
from dgpbench.harness.data import Normalization
from dgpbench.harness.data import load_csv
from dgpbench.harness.data import normalize
from dgpbench.harness.data import split
from dgpbench.harness.data import split_fixed


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def _indexed(n=10):
    """Dataset cuya única entrada es el índice de fila."""
    X = torch.arange(n, dtype=torch.float64).unsqueeze(1)
    return Dataset(X=X, y=2.0 * X, name="indexed")


class TestLoadCsv:
    """Pruebas para la lectura de CSV numéricos."""

    def test_three_rows(self, tmp_path):
        """Prueba 3 filas con 2 entradas y 1 objetivo."""
        path = _write(tmp_path, "a,b,y\n1,2,3\n4,5,6\n7,8,9\n")

        ds = load_csv(path)

        assert (ds.num_rows, ds.input_dim, ds.output_dim) == (3, 2, 1)
        assert ds.feature_names == ("a", "b")
        assert ds.target_names == ("y",)
        assert ds.name == "data"
        assert ds.y.reshape(-1).tolist() == [3.0, 6.0, 9.0]
        assert ds.normalization is None

    def test_target_by_name(self, tmp_path):
        """Prueba la selección del objetivo por nombre de columna."""
        path = _write(tmp_path, "a,b,c\n1,2,3\n4,5,6\n")

        ds = load_csv(path, target_columns=["a"], name="custom")

        assert ds.feature_names == ("b", "c")
        assert ds.X.tolist() == [[2.0, 3.0], [5.0, 6.0]]
        assert ds.name == "custom"

    def test_non_numeric_cell_location(self, tmp_path):
        """Prueba que una celda no numérica se localiza en (2, 3)."""
        path = _write(tmp_path, "a,b,y\n1,2,3\n4,5,abc\n")

        with pytest.raises(DatasetParseError, match=r"\(2,3\)") as exc_info:
            load_csv(path)

        assert (exc_info.value.row, exc_info.value.column) == (2, 3)

    def test_missing_cell(self, tmp_path):
        """Prueba que una celda no finita es un error de lectura."""
        path = _write(tmp_path, "a,y\n1,nan\n")

        with pytest.raises(DatasetParseError) as exc_info:
            load_csv(path)

        assert exc_info.value.column == 2

    def test_ragged_row(self, tmp_path):
        """Prueba que las filas deben tener tantas celdas como la cabecera."""
        path = _write(tmp_path, "a,b,y\n1,2,3\n4,5\n")

        with pytest.raises(DatasetParseError, match="cells") as exc_info:
            load_csv(path)

        assert exc_info.value.row == 2

    def test_missing_target_column(self, tmp_path):
        """Prueba que la columna objetivo debe existir."""
        path = _write(tmp_path, "a,y\n1,2\n")

        with pytest.raises(DatasetParseError, match="'z' not found"):
            load_csv(path, target_columns=["z"])

    def test_empty_file(self, tmp_path):
        """Prueba que un archivo vacío no es un dataset."""
        with pytest.raises(DatasetParseError, match="empty"):
            load_csv(_write(tmp_path, ""))

    def test_header_only(self, tmp_path):
        """Prueba que se necesita al menos una fila de datos."""
        with pytest.raises(DatasetParseError):
            load_csv(_write(tmp_path, "a,y\n"))

    def test_file_not_found(self, tmp_path):
        """Prueba que un archivo inexistente es un argumento inválido."""
        with pytest.raises(InvalidArgumentError, match="not found"):
            load_csv(tmp_path / "missing.csv")


class TestSplit:
    """Pruebas para las particiones de entrenamiento y test."""

    def test_eight_two(self):
        """Prueba N = 10 con fracción 0.8: 8 y 2 filas disjuntas."""
        train, test = split(_indexed(), 0.8, seed=3)

        train_rows = set(train.X.reshape(-1).tolist())
        test_rows = set(test.X.reshape(-1).tolist())
        assert (train.num_rows, test.num_rows) == (8, 2)
        assert train_rows.isdisjoint(test_rows)
        assert train_rows | test_rows == set(float(i) for i in range(10))

    def test_same_seed_same_split(self):
        """Prueba que la misma semilla da la misma partición."""
        a, _ = split(_indexed(), 0.8, seed=5)
        b, _ = split(_indexed(), 0.8, seed=5)

        assert torch.equal(a.X, b.X)

    def test_rows_stay_paired(self):
        """Prueba que X e y siguen alineados tras la partición."""
        train, test = split(_indexed(), 0.7, seed=1)

        assert torch.equal(train.y, 2.0 * train.X)
        assert torch.equal(test.y, 2.0 * test.X)

    def test_empty_test_side(self):
        """Prueba que la fracción 0.999 sobre 10 filas deja el test vacío."""
        with pytest.raises(InvalidArgumentError, match="empty side"):
            split(_indexed(), 0.999)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.2])
    def test_fraction_range(self, fraction):
        """Prueba que la fracción debe estar en (0, 1)."""
        with pytest.raises(InvalidArgumentError):
            split(_indexed(), fraction)

    def test_fixed_split(self):
        """Prueba la partición fija por índices de fila."""
        train, test = split_fixed(_indexed(), [9, 0, 9])

        assert test.X.reshape(-1).tolist() == [0.0, 9.0]
        assert train.num_rows == 8

    def test_fixed_split_out_of_range(self):
        """Prueba que los índices fijos deben ser válidos."""
        with pytest.raises(InvalidArgumentError):
            split_fixed(_indexed(), [10])


class TestNormalize:
    """Pruebas para la normalización con momentos de entrenamiento."""

    def test_training_moments(self):
        """Prueba medias nulas y desviaciones unitarias en entrenamiento."""
        gen = torch.Generator().manual_seed(0)
        X = 5.0 + 3.0 * torch.randn(40, 3, generator=gen, dtype=torch.float64)
        y = -2.0 + 0.5 * torch.randn(40, 1, generator=gen, dtype=torch.float64)
        train, test = split(Dataset(X=X, y=y), 0.8, seed=0)

        norm_train, norm_test = normalize(train, test)

        assert float(norm_train.X.mean(dim=0).abs().max()) < 1e-10
        assert torch.allclose(
            norm_train.X.std(dim=0, unbiased=False), torch.ones(3, dtype=torch.float64), atol=1e-10
        )
        assert norm_test.normalization is norm_train.normalization
        expected = (test.X - train.X.mean(dim=0)) / train.X.std(dim=0, unbiased=False)
        assert torch.allclose(norm_test.X, expected, atol=1e-12)

    def test_constant_column_keeps_scale(self):
        """Prueba que una columna constante conserva escala 1."""
        X = torch.ones(5, 1, dtype=torch.float64)

        norm = Normalization.fit(X, torch.arange(5, dtype=torch.float64).unsqueeze(1))

        assert float(norm.x_std) == 1.0
        assert bool((norm.apply_x(X) == 0).all())

    def test_restore_inverts_apply(self):
        """Prueba que restore_y invierte apply_y."""
        y = torch.tensor([[1.0], [4.0], [10.0]], dtype=torch.float64)
        norm = Normalization.fit(torch.zeros(3, 1, dtype=torch.float64), y)

        assert torch.allclose(norm.restore_y(norm.apply_y(y)), y, atol=1e-12)
        assert torch.allclose(
            norm.restore_variance(torch.ones(1, 1, dtype=torch.float64)), norm.y_std**2
        )

    def test_mismatched_rows(self):
        """Prueba que X e y deben tener las mismas filas."""
        with pytest.raises(InvalidArgumentError):
            Dataset(X=torch.zeros(3, 1), y=torch.zeros(2, 1))
