"""Diffusion-coefficient reconstruction for -(alpha u')' = f on [0, 1], u(0) = u(1) = 0.

Grid fields live on all ``grid_n + 2`` nodes ``x_i = i h`` (boundaries
included, ``h = 1 / (grid_n + 1)``). The operator uses arithmetic half-node
averages ``alpha_{i+1/2} = (alpha_i + alpha_{i+1}) / 2`` and is symmetric, so
the adjoint solve reuses the forward matrix.

Scaling conventions:

* the misfit functional is J = 1/2 sum_j (u(x_j) - d_j)^2;
* the posterior potential is U = J / sigma^2 + |theta|^2 / 2;
* the adjoint load of observation j is (u(x_j) - d_j) / (sigma^2 h) at its
  node, a grid delta, so ``lambda`` and ``-u' lambda'`` are densities;
* consequently dU/dalpha_i = w_i g_i with g = :func:`functional_gradient_field`
  and w the trapezoid weights (h inside, h/2 at the two boundary nodes), and
  dJ/dalpha_i = sigma^2 w_i g_i.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from ..errors import InvalidParameterError
from ..qcalc import HamiltonianSpec, ScalarField

__all__ = [
    "KLBasis",
    "DiffusionModel",
    "FieldState",
    "grid_nodes",
    "diffusion_solve",
    "adjoint_solve",
    "functional_gradient_field",
    "misfit",
    "direct_jackson_perturbation",
    "kl_expand",
    "diffusion_posterior_potential",
    "true_log_coefficient",
    "make_diffusion_problem",
    "diffusion_hamiltonian",
    "reconstruction_metrics",
]


def grid_nodes(grid_n: int) -> np.ndarray:
    """The ``grid_n + 2`` nodes of [0, 1], boundaries included."""
    return np.linspace(0.0, 1.0, grid_n + 2)


@dataclass(frozen=True)
class KLBasis:
    """Truncated KL basis of N(0, (-Laplacian)^(-s)) on [0, 1] with Dirichlet modes."""

    n_modes: int
    smoothness: float = 1.0

    def __post_init__(self):
        if self.n_modes < 1:
            raise InvalidParameterError("n_modes must be positive")
        if not self.smoothness > 0:
            raise InvalidParameterError("smoothness must be positive")

    @property
    def eigenvalues(self) -> np.ndarray:
        k = np.arange(1, self.n_modes + 1)
        return (k * np.pi) ** (-2.0 * self.smoothness)

    def modes(self, x) -> np.ndarray:
        """phi_k(x) = sqrt(2) sin(k pi x), shape ``(n_modes, len(x))``."""
        k = np.arange(1, self.n_modes + 1)[:, None]
        return math.sqrt(2.0) * np.sin(k * np.pi * np.asarray(x, dtype=float)[None, :])

    def design(self, x) -> np.ndarray:
        """kappa(x) = theta @ design(x): modes scaled by sqrt(eigenvalue)."""
        return np.sqrt(self.eigenvalues)[:, None] * self.modes(x)


def kl_expand(theta, kl: KLBasis, grid) -> np.ndarray:
    """alpha = exp(sum_k theta_k sqrt(lambda_k) phi_k) on the grid."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (kl.n_modes,):
        raise InvalidParameterError(f"theta must have {kl.n_modes} entries")
    return np.exp(theta @ kl.design(grid))


@dataclass(frozen=True, eq=False)
class DiffusionModel:
    grid_n: int
    source: Callable[[np.ndarray], np.ndarray]
    obs_points: np.ndarray
    sigma: float
    data: np.ndarray
    kl: KLBasis

    def __post_init__(self):
        obs = np.atleast_1d(np.asarray(self.obs_points, dtype=float))
        data = np.atleast_1d(np.asarray(self.data, dtype=float))
        if self.grid_n < 1:
            raise InvalidParameterError("grid_n must be positive")
        if np.any(obs <= 0) or np.any(obs >= 1):
            raise InvalidParameterError("observation points must lie inside (0, 1)")
        if data.shape != obs.shape:
            raise InvalidParameterError("data and obs_points must have the same length")
        if not self.sigma > 0:
            raise InvalidParameterError("sigma must be positive")
        object.__setattr__(self, "obs_points", obs)
        object.__setattr__(self, "data", data)

    @property
    def h(self) -> float:
        return 1.0 / (self.grid_n + 1)

    @cached_property
    def grid(self) -> np.ndarray:
        return grid_nodes(self.grid_n)

    @cached_property
    def obs_nodes(self) -> np.ndarray:
        nodes = np.rint(self.obs_points / self.h).astype(int)
        return np.clip(nodes, 1, self.grid_n)

    @cached_property
    def load(self) -> np.ndarray:
        return np.asarray(self.source(self.grid[1:-1]), dtype=float) * np.ones(self.grid_n)

    @cached_property
    def kl_design(self) -> np.ndarray:
        return self.kl.design(self.grid)

    def with_data(self, data) -> "DiffusionModel":
        return DiffusionModel(self.grid_n, self.source, self.obs_points, self.sigma, data, self.kl)


@dataclass
class FieldState:
    u: np.ndarray
    lam: np.ndarray
    alpha: np.ndarray


def _check_alpha(alpha, n_nodes: int) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (n_nodes,):
        raise InvalidParameterError(f"alpha must have {n_nodes} nodal values")
    if not np.all(alpha > 0):
        raise InvalidParameterError("alpha must be strictly positive")
    return alpha


def _solve(alpha: np.ndarray, rhs: np.ndarray, h: float) -> np.ndarray:
    a_half = 0.5 * (alpha[:-1] + alpha[1:])
    n = alpha.size - 2
    ab = np.zeros((3, n))
    ab[0, 1:] = -a_half[1:-1]
    ab[1, :] = a_half[:-1] + a_half[1:]
    ab[2, :-1] = -a_half[1:-1]
    out = np.zeros(n + 2)
    out[1:-1] = solve_banded((1, 1), ab, rhs * (h * h), check_finite=False)
    return out


def stiffness_matrix(alpha, h: float) -> np.ndarray:
    """Dense interior operator matrix (for tests and oracles)."""
    alpha = np.asarray(alpha, dtype=float)
    a_half = 0.5 * (alpha[:-1] + alpha[1:])
    return (np.diag(a_half[:-1] + a_half[1:]) - np.diag(a_half[1:-1], 1)
            - np.diag(a_half[1:-1], -1)) / (h * h)


def diffusion_solve(alpha, model: DiffusionModel) -> np.ndarray:
    """Forward solve; returns u on all nodes with zero boundary values."""
    alpha = _check_alpha(alpha, model.grid_n + 2)
    return _solve(alpha, model.load, model.h)


def adjoint_solve(alpha, u, model: DiffusionModel) -> np.ndarray:
    """Adjoint field for the loads (u(x_j) - d_j) / (sigma^2 h) at the observation nodes."""
    alpha = _check_alpha(alpha, model.grid_n + 2)
    rhs = np.zeros(model.grid_n)
    resid = np.asarray(u)[model.obs_nodes] - model.data
    np.add.at(rhs, model.obs_nodes - 1, resid / (model.sigma ** 2 * model.h))
    return _solve(alpha, rhs, model.h)


def functional_gradient_field(alpha, u, lam) -> np.ndarray:
    """Nodal field -u' lambda'.

    The product is formed on each cell from one-sided differences and averaged
    over the two cells touching an interior node (one cell at the boundary),
    which makes ``w_i * g_i`` (trapezoid weights) the exact derivative of the
    discrete potential with respect to alpha_i under arithmetic half-node
    averaging.
    """
    u = np.asarray(u, dtype=float)
    lam = np.asarray(lam, dtype=float)
    h = 1.0 / (u.size - 1)
    cell = np.diff(u) * np.diff(lam) / (h * h)
    g = np.empty(u.size)
    g[1:-1] = -0.5 * (cell[:-1] + cell[1:])
    g[0] = -cell[0]
    g[-1] = -cell[-1]
    return g


def misfit(u, model: DiffusionModel) -> float:
    r = np.asarray(u)[model.obs_nodes] - model.data
    return 0.5 * float(r @ r)


def direct_jackson_perturbation(alpha, node: int, q: float, model: DiffusionModel,
                                density: bool = False) -> float:
    """(J(alpha with alpha_y -> q^2 alpha_y) - J(alpha)) / ((q^2 - 1) alpha_y) by two forward solves.

    The raw quotient is a derivative with respect to one nodal value. With
    ``density=True`` it is divided by ``sigma^2 w_node`` so it is directly
    comparable with :func:`functional_gradient_field`.
    """
    if q == 1.0:
        raise InvalidParameterError("the Jackson quotient needs q != 1")
    alpha = _check_alpha(alpha, model.grid_n + 2)
    if alpha[node] == 0:
        raise InvalidParameterError("alpha(y) must be non-zero")
    q2 = q * q
    pert = alpha.copy()
    pert[node] *= q2
    j0 = misfit(diffusion_solve(alpha, model), model)
    j1 = misfit(diffusion_solve(pert, model), model)
    quot = (j1 - j0) / ((q2 - 1.0) * alpha[node])
    if density:
        quot /= model.sigma ** 2 * _trapezoid_weights(alpha.size, model.h)[node]
    return quot


def _trapezoid_weights(n_nodes: int, h: float) -> np.ndarray:
    w = np.full(n_nodes, h)
    w[0] = w[-1] = 0.5 * h
    return w


def diffusion_posterior_potential(theta, model: DiffusionModel) -> tuple[float, np.ndarray]:
    """U(theta) = J / sigma^2 + |theta|^2 / 2 and its gradient (one forward, one adjoint solve)."""
    theta = np.asarray(theta, dtype=float)
    alpha = np.exp(theta @ model.kl_design)
    u = _solve(alpha, model.load, model.h)
    resid = u[model.obs_nodes] - model.data
    value = 0.5 * float(resid @ resid) / model.sigma ** 2 + 0.5 * float(theta @ theta)
    rhs = np.zeros(model.grid_n)
    np.add.at(rhs, model.obs_nodes - 1, resid / (model.sigma ** 2 * model.h))
    lam = _solve(alpha, rhs, model.h)
    g = functional_gradient_field(alpha, u, lam)
    w = _trapezoid_weights(alpha.size, model.h)
    grad = model.kl_design @ (w * g * alpha) + theta
    return value, grad


def true_log_coefficient(x):
    """log alpha of the reference coefficient, 0.15 sin(2 pi x) + 0.05 sin(4 pi x)."""
    x = np.asarray(x, dtype=float)
    return 0.15 * np.sin(2 * np.pi * x) + 0.05 * np.sin(4 * np.pi * x)


class ConstantSource:
    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def __call__(self, x):
        return np.full(np.shape(x), self.value)


def make_diffusion_problem(grid_n: int = 80, n_modes: int = 9, n_obs: int = 70, sigma: float = 0.02,
                           smoothness: float = 1.0, source: float = 1.0, seed: int = 0,
                           noise: bool = True) -> tuple[DiffusionModel, dict]:
    """Synthetic data from the reference coefficient at ``n_obs`` equispaced interior points."""
    kl = KLBasis(n_modes, smoothness)
    obs = np.arange(1, n_obs + 1) / (n_obs + 1)
    src = ConstantSource(source)
    model = DiffusionModel(grid_n, src, obs, sigma, np.zeros(n_obs), kl)
    alpha_true = np.exp(true_log_coefficient(model.grid))
    u_true = diffusion_solve(alpha_true, model)
    rng = np.random.Generator(np.random.PCG64(seed))
    eta = rng.standard_normal(n_obs) * sigma if noise else np.zeros(n_obs)
    model = model.with_data(u_true[model.obs_nodes] + eta)
    record = {
        "grid_n": grid_n,
        "n_modes": n_modes,
        "smoothness": smoothness,
        "source": source,
        "sigma": sigma,
        "seed": seed,
        "obs_points": obs.tolist(),
        "obs_nodes": model.obs_nodes.tolist(),
        "noise": eta.tolist(),
        "data": model.data.tolist(),
        "alpha_true": alpha_true.tolist(),
        "u_true": u_true.tolist(),
    }
    return model, record


class _DiffusionPotential:
    # the integrator asks for the gradient and then the value at the same point,
    # so the last evaluation is kept
    def __init__(self, model: DiffusionModel):
        self.model = model
        self._last = None

    def _eval(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self._last is None or not np.array_equal(self._last[0], theta):
            self._last = (theta.copy(), *diffusion_posterior_potential(theta, self.model))
        return self._last

    def __call__(self, theta):
        return self._eval(theta)[1]

    def qgrad(self, theta, dp):
        # the Jackson functional derivative reduces to the adjoint gradient to first order
        return self._eval(theta)[2]


def diffusion_hamiltonian(model: DiffusionModel) -> HamiltonianSpec:
    pot = _DiffusionPotential(model)
    return HamiltonianSpec(ScalarField(pot, model.kl.n_modes, vectorized=False),
                           np.ones(model.kl.n_modes), potential_qgrad=pot.qgrad)


def reconstruction_metrics(alpha_est, alpha_true) -> dict:
    alpha_est = np.asarray(alpha_est, dtype=float)
    alpha_true = np.asarray(alpha_true, dtype=float)
    rmse = float(np.sqrt(np.mean((alpha_est - alpha_true) ** 2)))
    corr = float(np.corrcoef(alpha_est, alpha_true)[0, 1])
    return {"rmse": rmse, "correlation": corr}
