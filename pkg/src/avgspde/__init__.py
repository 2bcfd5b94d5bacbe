"""Spectral-Galerkin simulation and weak-order verification for slow-fast SPDE averaging."""

from ._backend import BACKEND, available_backends
from .averaging import (
    ErgodicFbar,
    ErgodicParams,
    estimate_fbar_ergodic,
    fit_exponential_decay,
    mixing_derivative_decay,
    mixing_gap_curve,
)
from .errors import (
    AvgSPDEError,
    ConfigError,
    EstimationError,
    HypothesisViolation,
    InconclusiveResultError,
    InvalidArgumentError,
    SimulationError,
    UnsupportedOperationError,
)
from .experiments import ExperimentConfig, WeakOrderReport, benchmark_config, fit_order, run_weak_order
from .integrators import SimParams, simulate_pair
from .models import (
    CosinePhi,
    CovarianceSpec,
    LinearDrift,
    ModelSpec,
    NemytskiiDrift,
    RationalPhi,
    benchmark_spec,
    validate_hypotheses,
)
from .noise import NoiseStream, ProcessTag
from .oracle import (
    estimate_Dx_ubar,
    estimate_u1,
    expansion_residual_study,
    gaussian_moments_averaged,
    gaussian_moments_coupled,
    weak_value_gaussian,
)
from .spectral import SpectralField

__version__ = "0.1.0"
