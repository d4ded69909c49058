"""Probability-density evolution solvers for scalar random ODEs under
additive coloured Gaussian noise."""

from .errors import (
    ConfigurationError,
    DivergenceError,
    DomainError,
    GenFpkError,
    ParameterError,
    StepFailure,
    UsageError,
)
from .model import (
    CustomKernel,
    InitialSpec,
    ModelSpec,
    NoiseSpec,
    OUKernel,
    Scenario,
    WhiteNoiseKernel,
    load_scenario,
    nondimensionalize_bistable,
    ou_kernel,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)
from .coefficients import (
    DiffusionCoefficient,
    DriftCoefficient,
    MultiIndexTable,
    check_sct_validity,
    d_eff_linear,
    fox_diffusion,
    sct_diffusion,
    sct_dn,
    vada_diffusion,
    vada_dm_eff,
    vada_exp_factor,
    vada_phi,
    white_noise_diffusion,
)
from .pufem import (
    Cover,
    LocalBasis,
    PdfField,
    PuFunction,
    PufemSpace,
    build_cover,
    fit_initial,
    pdf_eval,
    pdf_moment,
)
from .solver import (
    MomentHistory,
    SolveConfig,
    SolveResult,
    compute_moments,
    detect_stationarity,
    run,
    run_local,
    run_vada,
)
from .analytic import GaussianEvolution, gaussian_pdf, linear_moments, stationary_pdf
from .montecarlo import (
    PathEnsemble,
    compare_pdfs,
    integrate_paths,
    binned_density,
    kde_estimate,
    ou_sample_path,
    stationary_sampling,
)

__version__ = "0.1.0"
