"""q-leapfrog integration with q-Jacobian tracking.

One step is the half-kick / drift / half-kick composition

    p_half = p - dt/2 * F(x, p)
    x_new  = x + dt * v(x, p_half)
    p_new  = p_half - dt/2 * F(x_new, p_half)

with ``v`` and ``F`` the q-deformed velocity and force from :mod:`qhmc.qcalc`.
The Jackson Jacobian of each sub-map is block triangular, so its determinant
is ``det(I - dt/2 * D_p F)`` for a kick and ``det(I + dt * D_x v)`` for the
drift. Both blocks vanish identically when H is separable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import InvalidParameterError, NonFiniteResultError
from .qcalc import (
    DeformationParameter,
    HamiltonianSpec,
    fd_steps,
    force_field,
    jackson_jacobian,
    separable_force_and_potential,
    velocity_field,
)

__all__ = [
    "PhasePoint",
    "IntegratorConfig",
    "StepResult",
    "TrajectoryResult",
    "leapfrog_step",
    "integrate",
    "flip_momentum",
]


@dataclass(frozen=True, eq=False)
class PhasePoint:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float)).copy()
        p = np.atleast_1d(np.asarray(self.p, dtype=float)).copy()
        if x.ndim != 1 or x.shape != p.shape:
            raise InvalidParameterError(f"x and p must be equal-length vectors, got {x.shape} and {p.shape}")
        x.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def dim(self) -> int:
        return self.x.size

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.p)))

    def __repr__(self):
        return f"PhasePoint(x={self.x.tolist()}, p={self.p.tolist()})"


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    steps: int
    dp: DeformationParameter = field(default_factory=lambda: DeformationParameter(1.0))
    track_jacobian: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt >= 0):
            raise InvalidParameterError(f"dt must be finite and non-negative, got {self.dt!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise InvalidParameterError(f"steps must be a positive integer, got {self.steps!r}")

    def with_dt(self, dt: float) -> "IntegratorConfig":
        return IntegratorConfig(dt, self.steps, self.dp, self.track_jacobian)


class StepResult(NamedTuple):
    end: PhasePoint
    log_jacobian: float
    diverged: bool


@dataclass
class TrajectoryResult:
    end: PhasePoint
    log_jacobian: float
    h_trace: np.ndarray
    diverged: bool


def flip_momentum(z: PhasePoint) -> PhasePoint:
    """Time-reversal involution (x, p) -> (x, -p)."""
    return PhasePoint(z.x, -z.p)


class _Diverged(Exception):
    pass


def _log_det_factor(mat: np.ndarray) -> float:
    if mat.shape == (1, 1):
        det = float(mat[0, 0])
    else:
        det = float(np.linalg.det(mat))
    if not (det > 0 and math.isfinite(det)):
        raise _Diverged
    return math.log(det)


def _kick_log_det(H, x, p, dt, dp):
    jpf = jackson_jacobian(lambda pp: force_field(H, x, pp, dp), p, dp)
    return _log_det_factor(np.eye(H.dim) - 0.5 * dt * jpf)


def _drift_log_det(H, x, p, dt, dp):
    jxv = jackson_jacobian(lambda xx: velocity_field(H, xx, p, dp), x, dp)
    return _log_det_factor(np.eye(H.dim) + dt * jxv)


def _raw_step(H: HamiltonianSpec, x, p, dt, dp, track, force0=None):
    """One q-leapfrog step on plain arrays; call under ``np.errstate``.

    Returns ``(x_new, p_new, log_jacobian_increment, force_at_end, u_at_end)``
    where ``u_at_end`` is U(x_new) when the force evaluation produced it
    (else ``None``); raises ``_Diverged`` on any non-finite intermediate or
    non-positive determinant.
    """
    log_j = 0.0
    general = track and not H.separable
    try:
        f0 = force_field(H, x, p, dp) if force0 is None else force0
        if general:
            log_j += _kick_log_det(H, x, p, dt, dp)
        p_half = p - 0.5 * dt * f0
        v = velocity_field(H, x, p_half, dp)
        if general:
            log_j += _drift_log_det(H, x, p_half, dt, dp)
        x_new = x + dt * v
        if not (np.isfinite(p_half).all() and np.isfinite(x_new).all()):
            raise _Diverged
        if H.separable:
            f1, u1 = separable_force_and_potential(H, x_new, dp)
        else:
            f1, u1 = force_field(H, x_new, p_half, dp), None
        if general:
            log_j += _kick_log_det(H, x_new, p_half, dt, dp)
        p_new = p_half - 0.5 * dt * f1
        if not np.isfinite(p_new).all():
            raise _Diverged
    except NonFiniteResultError:
        raise _Diverged from None
    # a separable force does not depend on p, so it carries over to the next step
    return x_new, p_new, log_j, (f1 if H.separable else None), u1


def leapfrog_step(z: PhasePoint, H: HamiltonianSpec, cfg: IntegratorConfig) -> StepResult:
    """Apply one q-leapfrog step; divergence is reported, never raised."""
    if z.dim != H.dim:
        raise InvalidParameterError(f"phase point has dimension {z.dim}, Hamiltonian has {H.dim}")
    try:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            x, p, log_j, _, _ = _raw_step(H, z.x, z.p, cfg.dt, cfg.dp, cfg.track_jacobian)
    except _Diverged:
        return StepResult(z, math.nan, True)
    return StepResult(PhasePoint(x, p), log_j, False)


def integrate(z0: PhasePoint, H: HamiltonianSpec, cfg: IntegratorConfig,
              h0: Optional[float] = None) -> TrajectoryResult:
    """Run ``cfg.steps`` q-leapfrog steps from ``z0``.

    ``h_trace`` holds H at every step boundary (``steps + 1`` values unless the
    trajectory diverged, in which case it stops at the last finite state).
    """
    if z0.dim != H.dim:
        raise InvalidParameterError(f"phase point has dimension {z0.dim}, Hamiltonian has {H.dim}")
    x, p = np.array(z0.x), np.array(z0.p)
    dt, dp, track = cfg.dt, cfg.dp, cfg.track_jacobian
    trace = np.empty(cfg.steps + 1)
    trace[0] = H.energy(x, p) if h0 is None else h0
    if H.separable:
        return _separable_integrate(x, p, H, cfg, trace)
    log_j = 0.0
    force = None
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for n in range(cfg.steps):
            try:
                x_new, p_new, inc, force, u = _raw_step(H, x, p, dt, dp, track, force)
            except _Diverged:
                return TrajectoryResult(PhasePoint(x, p), math.nan, trace[:n + 1], True)
            if u is None:
                u = H.potential.func(x_new)
            h = float(u + H.kinetic_energy(x_new, p_new))
            if not math.isfinite(h):
                return TrajectoryResult(PhasePoint(x_new, p_new), math.nan, trace[:n + 1], True)
            trace[n + 1] = h
            x, p = x_new, p_new
            log_j += inc
    return TrajectoryResult(PhasePoint(x, p), log_j, trace, False)


def _all_finite(a) -> bool:
    # the sum is a cheap screen; only an inf/nan sum needs the elementwise check
    return math.isfinite(a.sum()) or bool(np.isfinite(a).all())


def _separable_integrate(x, p, H: HamiltonianSpec, cfg: IntegratorConfig, trace) -> TrajectoryResult:
    """Same arithmetic as :func:`_raw_step`, specialised to a separable H: one
    preallocated batch per Jackson force evaluation, U at the new position
    taken from that batch, and the velocity in closed form. The log Jacobian
    is identically zero."""
    dp, dt, d = cfg.dp, cfg.dt, H.dim
    q2 = dp.q * dp.q
    sq, isq = dp.sqrt_q, dp.inv_sqrt_q
    half = 0.5 * dt
    cvel = 0.5 * (dp.q * dp.q + 1.0)
    mass = H.mass
    batch = H.potential.batch
    qgrad = H.potential_qgrad
    classical = dp.is_classical
    if classical:
        zs = np.empty((2 * d + 1, d))
        plus = 1 + 2 * np.arange(d)
        cols = np.arange(d)
    else:
        zs = np.empty((d + 1, d))
        diag = zs[1:].reshape(-1)[::d + 1]

    def force(xx):
        # returns (F, U(xx)); raises _Diverged on a non-finite potential value
        if qgrad is not None:
            g = np.asarray(qgrad(xx, dp), dtype=float)
            if not _all_finite(g):
                raise _Diverged
            return sq * g, H.potential.func(xx)
        if classical:
            h = fd_steps(xx, dp)
            zs[:] = xx
            zs[plus, cols] += h
            zs[plus + 1, cols] -= h
            vals = batch(zs)
            if not _all_finite(vals):
                raise _Diverged
            g = (vals[plus] - vals[plus + 1]) / (2 * h)
        elif np.abs(xx).min() < dp.zero_tol:
            try:
                return separable_force_and_potential(H, xx, dp)
            except NonFiniteResultError:
                raise _Diverged from None
        else:
            zs[:] = xx
            diag[:] = q2 * xx
            vals = batch(zs)
            if not _all_finite(vals):
                raise _Diverged
            g = (vals[1:] - vals[0]) / ((q2 - 1.0) * xx)
        return sq * g, float(vals[0])

    n = 0
    p = np.asarray(p)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        try:
            f, _ = force(x)
            for n in range(cfg.steps):
                p_half = p - half * f
                x_new = x + dt * (isq * (cvel * p_half / mass))
                if not (math.isfinite(p_half.sum() + x_new.sum()) or (_all_finite(p_half) and _all_finite(x_new))):
                    raise _Diverged
                f, u = force(x_new)
                p_new = p_half - half * f
                if not _all_finite(p_new):
                    raise _Diverged
                h = float(u + np.sum(p_new * p_new / (2.0 * mass)))
                if not math.isfinite(h):
                    return TrajectoryResult(PhasePoint(x_new, p_new), math.nan, trace[:n + 1], True)
                trace[n + 1] = h
                x, p = x_new, p_new
        except _Diverged:
            return TrajectoryResult(PhasePoint(x, p), math.nan, trace[:n + 1], True)
    return TrajectoryResult(PhasePoint(x, p), 0.0, trace, False)
