"""Simulation and estimation toolkit for subcritical Gaussian multiplicative chaos."""

__version__ = "0.1.0"

from .fields import (
    CirculantFactor,
    CovarianceFactor,
    FieldGrid,
    Grid,
    InvalidKernelError,
    KernelSpec,
    LayeredField,
    NotPositiveDefiniteError,
    build_kernel,
    factor_for,
    factorize,
    layered_factor,
    sample_field,
    sample_layered,
)
from .gmc import (
    GmcParams,
    GridMeasure,
    SubcriticalityError,
    ball_mass,
    gmc_from_field,
    moment_scaling_slope,
    rooted_field,
    rooted_layered,
    sample_point,
    sample_points,
    thick_point_box_count,
    thick_point_exponent,
)
from .lbm import (
    ClockProcess,
    ExitExperimentConfig,
    clock_from_path,
    exit_moment_experiment,
    exit_moment_slope,
    invert_clock,
    lbm_path,
    mu_measure,
    mu_minus_measure,
    simulate_brownian_exit,
    theoretical_lbm_lower_spectrum,
    theoretical_mu_spectrum,
    theoretical_xi_mu,
)
from .mfa import (
    PartitionTable,
    SpectrumCurve,
    alpha_q,
    coarse_spectrum,
    estimate_tau,
    legendre,
    legendre_inverse,
    local_dimension,
    partition_sum,
    partition_table,
    structure_phi,
    theoretical_spectrum,
    theoretical_tau,
    theoretical_xi,
)
from .mrw import (
    PathSeries,
    mrw_structure_slope,
    path_lower_dimension,
    simulate_brownian,
    simulate_mrw,
    theoretical_mrw_lower_spectrum,
)
from .parallel import ReplicaError
from .runner import replay, report, run

__all__ = [
    "__version__",
    "CirculantFactor",
    "ClockProcess",
    "CovarianceFactor",
    "ExitExperimentConfig",
    "FieldGrid",
    "GmcParams",
    "Grid",
    "GridMeasure",
    "InvalidKernelError",
    "KernelSpec",
    "LayeredField",
    "NotPositiveDefiniteError",
    "PartitionTable",
    "PathSeries",
    "ReplicaError",
    "SpectrumCurve",
    "SubcriticalityError",
    "alpha_q",
    "ball_mass",
    "build_kernel",
    "clock_from_path",
    "coarse_spectrum",
    "estimate_tau",
    "exit_moment_experiment",
    "exit_moment_slope",
    "factor_for",
    "factorize",
    "gmc_from_field",
    "invert_clock",
    "layered_factor",
    "lbm_path",
    "legendre",
    "legendre_inverse",
    "local_dimension",
    "moment_scaling_slope",
    "mrw_structure_slope",
    "mu_measure",
    "mu_minus_measure",
    "partition_sum",
    "partition_table",
    "path_lower_dimension",
    "replay",
    "report",
    "rooted_field",
    "rooted_layered",
    "run",
    "sample_field",
    "sample_layered",
    "sample_point",
    "sample_points",
    "simulate_brownian",
    "simulate_brownian_exit",
    "simulate_mrw",
    "structure_phi",
    "theoretical_lbm_lower_spectrum",
    "theoretical_mrw_lower_spectrum",
    "theoretical_mu_spectrum",
    "theoretical_spectrum",
    "theoretical_tau",
    "theoretical_xi",
    "theoretical_xi_mu",
    "thick_point_box_count",
    "thick_point_exponent",
]
