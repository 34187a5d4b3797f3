"""Overlapping stochastic Wishart matrices: limiting covariance of trace powers.

Modules: :mod:`entry_process` (time-correlated entries), :mod:`ensemble`
(geometry and one Monte Carlo replica), :mod:`theory` (exact and quadrature
covariance), :mod:`montecarlo` (parallel reproducible estimation) and
:mod:`cli`.
"""

from ._backend import backend_name
from .ensemble import ExperimentGeometry, ObservableSpec, overlap
from .entry_process import EntryProcessSpec, Family, ScalarField, TimeGrid
from .montecarlo import McConfig, McEstimate, gaussianity_report, run
from .theory import CovarianceParams, covariance_exact, covariance_matrix, covariance_quadrature

__version__ = "0.1.0"

__all__ = [
    "CovarianceParams",
    "EntryProcessSpec",
    "ExperimentGeometry",
    "Family",
    "McConfig",
    "McEstimate",
    "ObservableSpec",
    "ScalarField",
    "TimeGrid",
    "backend_name",
    "covariance_exact",
    "covariance_matrix",
    "covariance_quadrature",
    "gaussianity_report",
    "overlap",
    "run",
]
