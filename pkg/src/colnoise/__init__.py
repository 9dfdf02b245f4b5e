"""Response-pdf solvers for scalar ODEs driven by coloured Gaussian noise.

The package evolves the one-time probability density of

    dX/dt = h(X) + kappa * Xi(t),    X(t0) ~ Gaussian,

with Xi a coloured (smoothly correlated) Gaussian excitation, using a
family of closure approximations on a partition-of-unity finite element
discretization, together with an exact analytic oracle for linear drift,
a Monte-Carlo cross-validation harness and Gaussian moment combinatorics.
"""

from .closures import (
    DiffusionField,
    MomentHistory,
    effective_intensity,
    fox_diffusion,
    generalized_intensities,
    hanggi_diffusion,
    make_diffusion_field,
    sct_coefficients,
)
from .evolve import ClosureSpec, PufemConfig, SolverConfig, detect_stationarity, run_evolution
from .gaussmoments import CovSpec, hermite_abs, isserlis, quadratic_cumulant
from .model import (
    DriftSpec,
    InitialSpec,
    NoiseSpec,
    ProblemSpec,
    normalize_bistable,
    normalized_bistable_problem,
    ou_autocov,
)
from .montecarlo import Ensemble, McConfig, kde, simulate_ensemble, stationary_samples
from .oracle import exact_pdf_linear, hanggi_stationary_pdf, linear_moments
from .pufem import Cover, DiscreteSystem, PuBasis, cn_step, legendre, pu_mother, shape_eval

__version__ = "0.1.0"

__all__ = [
    "ClosureSpec",
    "Cover",
    "CovSpec",
    "DiffusionField",
    "DiscreteSystem",
    "DriftSpec",
    "Ensemble",
    "InitialSpec",
    "McConfig",
    "MomentHistory",
    "NoiseSpec",
    "ProblemSpec",
    "PuBasis",
    "PufemConfig",
    "SolverConfig",
    "cn_step",
    "detect_stationarity",
    "effective_intensity",
    "exact_pdf_linear",
    "fox_diffusion",
    "generalized_intensities",
    "hanggi_diffusion",
    "hanggi_stationary_pdf",
    "hermite_abs",
    "isserlis",
    "kde",
    "legendre",
    "linear_moments",
    "make_diffusion_field",
    "normalize_bistable",
    "normalized_bistable_problem",
    "ou_autocov",
    "pu_mother",
    "quadratic_cumulant",
    "run_evolution",
    "sct_coefficients",
    "shape_eval",
    "simulate_ensemble",
    "stationary_samples",
]
