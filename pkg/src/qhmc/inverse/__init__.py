from .diffusion import (
    DiffusionModel,
    KLBasis,
    diffusion_hamiltonian,
    diffusion_posterior_potential,
    diffusion_solve,
    make_diffusion_problem,
)
from .gravity import GravityModel, gravity_hamiltonian, gravity_potential, make_gravity_problem, posterior_mode

__all__ = [
    "DiffusionModel",
    "KLBasis",
    "diffusion_hamiltonian",
    "diffusion_posterior_potential",
    "diffusion_solve",
    "make_diffusion_problem",
    "GravityModel",
    "gravity_hamiltonian",
    "gravity_potential",
    "make_gravity_problem",
    "posterior_mode",
]
