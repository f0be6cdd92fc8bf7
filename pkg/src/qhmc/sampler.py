"""q-HMC: Gaussian momentum refresh, q-leapfrog proposal and a Metropolis
test weighted by the q-Jacobian determinant.

Random draws per iteration, in order: ``d`` standard normals for the momentum,
then one uniform for the accept test. The uniform is drawn even when the
proposal diverged, so the stream position never depends on the outcome.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import InvalidParameterError, UnsupportedKineticError
from .integrator import IntegratorConfig, PhasePoint, integrate
from .qcalc import HamiltonianSpec

__all__ = [
    "AdaptConfig",
    "SamplerConfig",
    "ChainOutput",
    "StepOutcome",
    "sample_momentum",
    "accept_probability",
    "hmc_step",
    "run_chain",
    "make_rng",
]


@dataclass(frozen=True)
class AdaptConfig:
    """Robbins-Monro tuning of log(dt) toward ``target_accept``.

    After iteration ``t`` (1-based, ``t <= adapt_steps``)::

        log_dt += learning_rate / t**0.6 * (accepted - target_accept)
    """

    target_accept: float = 0.65
    adapt_steps: int = 1000
    learning_rate: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.target_accept < 1.0:
            raise InvalidParameterError("target_accept must lie strictly inside (0, 1)")
        if self.adapt_steps < 1:
            raise InvalidParameterError("adapt_steps must be positive")
        if not self.learning_rate > 0:
            raise InvalidParameterError("learning_rate must be positive")


@dataclass(frozen=True)
class SamplerConfig:
    integrator: IntegratorConfig
    n_samples: int
    burn_in: int = 0
    seed: int = 0
    adapt: Optional[AdaptConfig] = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise InvalidParameterError("n_samples must be positive")
        if not 0 <= self.burn_in < self.n_samples:
            raise InvalidParameterError("burn_in must satisfy 0 <= burn_in < n_samples")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidParameterError("seed must be a 64-bit unsigned integer")


@dataclass
class ChainOutput:
    """Everything recorded by :func:`run_chain`.

    Row ``k`` of ``samples`` is the state after iteration ``k``; the first
    ``burn_in`` rows are kept but excluded by the diagnostics.
    """

    samples: np.ndarray
    accepted: np.ndarray
    h_init_trace: np.ndarray
    h_final_trace: np.ndarray
    log_jacobian: np.ndarray
    diverged: np.ndarray
    wall_time: float
    final_dt: float
    burn_in: int = 0
    dt_trace: np.ndarray = field(default=None, repr=False)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def accept_rate(self) -> float:
        return float(np.mean(self.accepted))

    @property
    def potential_trace(self) -> np.ndarray:
        return self.h_init_trace


class StepOutcome(NamedTuple):
    x_next: np.ndarray
    accepted: bool
    h_init: float
    h_final: float
    log_jacobian: float
    diverged: bool


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def sample_momentum(x, H: HamiltonianSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw p ~ N(0, M) for the diagonal mass of ``H``."""
    if not H.separable:
        raise UnsupportedKineticError("momentum refresh is only defined for the quadratic kinetic energy")
    return rng.standard_normal(H.dim) * np.sqrt(H.mass)


def accept_probability(h_init: float, h_final: float, log_jacobian: float = 0.0,
                       diverged: bool = False) -> float:
    """min(1, J * exp(h_init - h_final)), evaluated in log space."""
    if diverged or not math.isfinite(h_final) or not math.isfinite(log_jacobian):
        return 0.0
    log_ratio = log_jacobian + h_init - h_final
    if log_ratio >= 0.0:
        return 1.0
    return math.exp(log_ratio)


def hmc_step(x_curr, H: HamiltonianSpec, cfg: SamplerConfig | IntegratorConfig,
             rng: np.random.Generator) -> StepOutcome:
    """One q-HMC transition from ``x_curr``."""
    icfg = cfg.integrator if isinstance(cfg, SamplerConfig) else cfg
    x_curr = np.asarray(x_curr, dtype=float)
    p = sample_momentum(x_curr, H, rng)
    h_init = H.energy(x_curr, p)
    traj = integrate(PhasePoint(x_curr, p), H, icfg, h0=h_init)
    h_final = math.inf if traj.diverged else float(traj.h_trace[-1])
    alpha = accept_probability(h_init, h_final, traj.log_jacobian, traj.diverged)
    u = rng.random()
    if u < alpha:
        return StepOutcome(np.array(traj.end.x), True, h_init, h_final, traj.log_jacobian, False)
    return StepOutcome(x_curr, False, h_init, h_final, traj.log_jacobian, traj.diverged)


def run_chain(x0, H: HamiltonianSpec, cfg: SamplerConfig) -> ChainOutput:
    """Run ``cfg.n_samples`` q-HMC iterations from ``x0``.

    ``wall_time`` covers the sampling loop only.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if x.size != H.dim:
        raise InvalidParameterError(f"x0 has dimension {x.size}, target has {H.dim}")
    if not np.all(np.isfinite(x)):
        raise InvalidParameterError("x0 must be finite")
    n, d = cfg.n_samples, H.dim
    samples = np.empty((n, d))
    accepted = np.zeros(n, dtype=bool)
    diverged = np.zeros(n, dtype=bool)
    h_init = np.empty(n)
    h_final = np.empty(n)
    log_j = np.empty(n)
    dts = np.empty(n)

    rng = make_rng(cfg.seed)
    icfg = cfg.integrator
    adapt = cfg.adapt
    log_dt = math.log(icfg.dt) if adapt is not None else None

    start = time.perf_counter()
    for k in range(n):
        dts[k] = icfg.dt
        out = hmc_step(x, H, icfg, rng)
        x = out.x_next
        samples[k] = x
        accepted[k] = out.accepted
        diverged[k] = out.diverged
        h_init[k] = out.h_init
        h_final[k] = out.h_final
        log_j[k] = out.log_jacobian
        if adapt is not None and k < adapt.adapt_steps:
            t = k + 1
            log_dt += adapt.learning_rate / t ** 0.6 * (float(out.accepted) - adapt.target_accept)
            icfg = icfg.with_dt(math.exp(log_dt))
    wall = time.perf_counter() - start

    return ChainOutput(samples, accepted, h_init, h_final, log_j, diverged, wall,
                       icfg.dt, cfg.burn_in, dts)
