"""Diagnósticos de la forma de la posterior."""

from .gaussianity import GaussianityReport
from .gaussianity import bimodality_coverage
from .gaussianity import gaussianity_report
from .gaussianity import kurtosis
from .gaussianity import kurtosis_pvalue

__all__ = [
    "GaussianityReport",
    "bimodality_coverage",
    "gaussianity_report",
    "kurtosis",
    "kurtosis_pvalue",
]
