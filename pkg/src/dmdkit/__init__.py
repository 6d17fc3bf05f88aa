"""DMD model family: exact and optimized fits, bagged ensembles, forecasting."""

from .bop import (
    BagConfig,
    EnsembleStatistics,
    align_to_reference,
    bop_dmd,
    ensemble_statistics,
    sample_bag,
)
from .core import (
    DiscreteOperatorSpectrum,
    DmdModel,
    SnapshotMatrix,
    amplitudes_from_first_snapshot,
    build_snapshot_pairs,
    exact_dmd,
    normalize_components,
    reconstruct,
    relative_error,
    suggest_rank,
    truncated_svd,
)
from .datagen import ToySpec, add_sparse_outliers, oscillator_surrogate, toy_dataset
from .fileio import ModelArchive, load_archive, load_csv, save_archive, save_csv
from .forecast import Forecast, coverage_fraction, forecast, sample_model
from .varpro import (
    ConvergenceReport,
    SolverConfig,
    TerminationReason,
    initialize_eigenvalues,
    optimized_dmd,
    solve_linear_stage,
    time_dynamics_matrix,
    varpro_cost,
    varpro_jacobian,
)

__version__ = "0.1.0"

__all__ = [
    "BagConfig",
    "ConvergenceReport",
    "DiscreteOperatorSpectrum",
    "DmdModel",
    "EnsembleStatistics",
    "Forecast",
    "ModelArchive",
    "SnapshotMatrix",
    "SolverConfig",
    "TerminationReason",
    "ToySpec",
    "add_sparse_outliers",
    "align_to_reference",
    "amplitudes_from_first_snapshot",
    "bop_dmd",
    "build_snapshot_pairs",
    "coverage_fraction",
    "ensemble_statistics",
    "exact_dmd",
    "forecast",
    "initialize_eigenvalues",
    "load_archive",
    "load_csv",
    "normalize_components",
    "oscillator_surrogate",
    "optimized_dmd",
    "reconstruct",
    "relative_error",
    "sample_bag",
    "sample_model",
    "save_archive",
    "save_csv",
    "solve_linear_stage",
    "suggest_rank",
    "time_dynamics_matrix",
    "toy_dataset",
    "truncated_svd",
    "varpro_cost",
    "varpro_jacobian",
]
