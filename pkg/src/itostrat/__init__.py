"""Ito-Stratonovich conversion for transport-noise SPDEs on the torus.

Spectral fields, Brownian increments, noise operators with their conversion
drift, paired integrators and cross-variation estimators.
"""

from .errors import (
    ConfigError,
    CutoffMismatchError,
    DimensionError,
    InvariantError,
    ItoStratError,
    NonFiniteError,
)
from .integrators import (
    DriftSpec,
    LocalizationGuard,
    TrajectoryRecord,
    simulate,
    simulate_linear_scalar,
    step_ito_em,
    step_strat_heun,
)
from .kernels import BACKEND
from .noise import BrownianIncrements, TimeGrid, coarsen, sample_batch, sample_increments
from .operators import (
    NoiseFamily,
    OperatorBundle,
    corrector,
    corrector_linear,
    corrector_modulated,
    fd_frechet,
    make_transport_bundle,
)
from .spectral import SpectralField

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BrownianIncrements",
    "ConfigError",
    "CutoffMismatchError",
    "DimensionError",
    "DriftSpec",
    "InvariantError",
    "ItoStratError",
    "LocalizationGuard",
    "NoiseFamily",
    "NonFiniteError",
    "OperatorBundle",
    "SpectralField",
    "TimeGrid",
    "TrajectoryRecord",
    "coarsen",
    "corrector",
    "corrector_linear",
    "corrector_modulated",
    "fd_frechet",
    "make_transport_bundle",
    "sample_batch",
    "sample_increments",
    "simulate",
    "simulate_linear_scalar",
    "step_ito_em",
    "step_strat_heun",
]
