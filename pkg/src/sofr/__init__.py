"""Hypothesis tests of nullity and linearity for scalar-on-function regression."""

from .basis import (
    MixedDesign,
    SplineBasis,
    eval_bspline,
    fgam_design,
    penalty_matrix,
    reparameterize,
)
from .datagen import RngStream, SimulationSetting, generate, sparsify
from .exceptions import (
    BootstrapFailure,
    DegenerateCovariance,
    ImputationFailure,
    InsufficientSample,
    InvalidArgument,
    NullSimulationUnstable,
    NumericalFailure,
    ParseError,
    ShapeError,
    SingularDesign,
    SofrError,
)
from .flm import FlmFit, fit_flm_basis, fit_flm_scores, null_residuals
from .fpca import FpcaFit, align_signs, fit_fpca, fit_sparse_fpca, impute_sparse
from .funcdata import FunctionalDataset, Grid, SparseFunctionalDataset, make_uniform_grid
from .ggf import PcvmStatistic, ggf_test, pcvm_a_matrix, pcvm_monte_carlo
from .hr import hr_design, hr_test
from .ksm import ksm_test, select_sn
from .mhr import MixedFit, NullDistribution, fit_mixed, mhr_linearity, mhr_nullity
from .results import TestResult

__version__ = "0.1.0"

__all__ = [
    "BootstrapFailure",
    "DegenerateCovariance",
    "FlmFit",
    "FpcaFit",
    "FunctionalDataset",
    "Grid",
    "ImputationFailure",
    "InsufficientSample",
    "InvalidArgument",
    "MixedDesign",
    "MixedFit",
    "NullDistribution",
    "NullSimulationUnstable",
    "NumericalFailure",
    "ParseError",
    "PcvmStatistic",
    "RngStream",
    "ShapeError",
    "SimulationSetting",
    "SingularDesign",
    "SofrError",
    "SparseFunctionalDataset",
    "SplineBasis",
    "TestResult",
    "align_signs",
    "eval_bspline",
    "fgam_design",
    "fit_flm_basis",
    "fit_flm_scores",
    "fit_fpca",
    "fit_mixed",
    "fit_sparse_fpca",
    "generate",
    "ggf_test",
    "hr_design",
    "hr_test",
    "impute_sparse",
    "ksm_test",
    "make_uniform_grid",
    "mhr_linearity",
    "mhr_nullity",
    "null_residuals",
    "pcvm_a_matrix",
    "pcvm_monte_carlo",
    "penalty_matrix",
    "reparameterize",
    "select_sn",
    "sparsify",
]
