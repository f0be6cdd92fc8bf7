"""q-deformed Hamiltonian Monte Carlo."""
from .diagnostics import MixingReport, autocorrelation, iat, summarize
from .errors import (
    ConfigError,
    InvalidParameterError,
    NonFiniteResultError,
    QHMCError,
    UnsupportedDimensionError,
    UnsupportedKineticError,
)
from .integrator import IntegratorConfig, PhasePoint, TrajectoryResult, flip_momentum, integrate, leapfrog_step
from .potentials import POTENTIALS, get_potential
from .qcalc import (
    DeformationParameter,
    HamiltonianSpec,
    ScalarField,
    force_field,
    jackson_dx,
    jackson_gradient,
    jackson_jacobian,
    poisson_bracket_q,
    velocity_field,
)
from .sampler import AdaptConfig, ChainOutput, SamplerConfig, accept_probability, hmc_step, run_chain

__version__ = "0.1.0"
