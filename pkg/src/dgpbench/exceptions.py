"""Jerarquía de excepciones de dgpbench."""


class DGPBenchError(Exception):
    exit_code: int = 1
    error_code: str = "INTERNAL_ERROR"
    message_template: str = "An unexpected error occurred."

    def __init__(self, **kwargs: object) -> None:
        self.context = kwargs
        super().__init__(self.message_template.format(**self.context))

    def to_dict(self) -> dict[str, object]:
        return {
            "error": {
                "exception": self.error_code,
                "message": str(self),
                "context": self.context,
            },
            "exit_code": self.exit_code,
        }


class InvalidArgumentError(DGPBenchError):
    """
    Se lanza cuando un argumento viola una precondición: dimensiones,
    formas incompatibles o rangos fuera de dominio.
    """

    exit_code = 2
    error_code = "INVALID_ARGUMENT"
    message_template = "Invalid argument: {reason}"

    def __init__(self, *, reason: str) -> None:
        super().__init__(reason=reason)


class NumericalFailureError(DGPBenchError):
    """
    Se lanza cuando una operación de álgebra lineal no puede completarse,
    por ejemplo cuando la factorización de Cholesky agota el jitter máximo.
    """

    exit_code = 3
    error_code = "NUMERICAL_FAILURE"
    message_template = "Numerical failure: {reason} (last jitter {jitter:.3e})"

    def __init__(self, *, reason: str, jitter: float = 0.0) -> None:
        self.jitter = jitter
        super().__init__(reason=reason, jitter=jitter)


class InvalidStateError(DGPBenchError):
    """Se lanza cuando un objeto no está en condiciones de ejecutar la operación."""

    exit_code = 4
    error_code = "INVALID_STATE"
    message_template = "Invalid state: {reason}"

    def __init__(self, *, reason: str) -> None:
        super().__init__(reason=reason)


class DegenerateInputError(DGPBenchError):
    """Se lanza cuando una muestra no admite el estadístico pedido (varianza nula)."""

    exit_code = 2
    error_code = "DEGENERATE_INPUT"
    message_template = "Degenerate input: {reason}"

    def __init__(self, *, reason: str) -> None:
        super().__init__(reason=reason)


class DatasetParseError(DGPBenchError):
    """
    Se lanza cuando un CSV no puede interpretarse. La fila y la columna
    son 1-indexadas sobre las filas de datos (la cabecera no cuenta).
    """

    exit_code = 5
    error_code = "DATASET_PARSE_ERROR"
    message_template = "Dataset parse error at ({row},{column}): {reason}"

    def __init__(self, *, reason: str, row: int = 0, column: int = 0) -> None:
        self.row = row
        self.column = column
        super().__init__(reason=reason, row=row, column=column)


class ModelLoadError(DGPBenchError):
    """Se lanza cuando un artefacto persistido no puede restaurarse."""

    exit_code = 6
    error_code = "MODEL_LOAD_ERROR"
    message_template = "Cannot load model artifact, field '{field}': {reason}"

    def __init__(self, *, reason: str, field: str = "<file>") -> None:
        self.field = field
        super().__init__(reason=reason, field=field)


class ConfigError(DGPBenchError):
    """Raised when there's an error loading or validating configuration."""

    exit_code = 7
    error_code = "CONFIG_ERROR"
    message_template = "Configuration error: {reason}"

    def __init__(self, *, reason: str) -> None:
        super().__init__(reason=reason)
