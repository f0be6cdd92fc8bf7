"""Depth of a buried point mass from surface gravity anomalies."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from ..errors import InvalidParameterError
from ..qcalc import HamiltonianSpec, ScalarField

__all__ = [
    "GravityModel",
    "gravity_forward",
    "gravity_potential",
    "make_gravity_problem",
    "gravity_hamiltonian",
    "posterior_mode",
    "PAPER_SENSORS",
]

PAPER_SENSORS = (0.0, 0.25, 0.5, 0.75, 1.0)


def gravity_forward(h, x_s, x_f: float):
    """Vertical anomaly h / ((x_s - x_f)^2 + h^2)^(3/2) of a unit point mass at depth h."""
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr <= 0):
        raise InvalidParameterError("depth h must be positive")
    dx = np.asarray(x_s, dtype=float) - x_f
    out = h_arr / (dx * dx + h_arr * h_arr) ** 1.5
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class GravityModel:
    x_f: float
    sensors: np.ndarray
    sigma: float
    data: np.ndarray
    prior_mean: float
    prior_std: float

    def __post_init__(self):
        sensors = np.atleast_1d(np.asarray(self.sensors, dtype=float))
        data = np.atleast_1d(np.asarray(self.data, dtype=float))
        if sensors.size == 0:
            raise InvalidParameterError("at least one sensor is required")
        if data.shape != sensors.shape:
            raise InvalidParameterError("data and sensors must have the same length")
        if not (self.sigma > 0 and self.prior_std > 0):
            raise InvalidParameterError("sigma and prior_std must be positive")
        object.__setattr__(self, "sensors", sensors)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "_dx2", (sensors - self.x_f) ** 2)
        object.__setattr__(self, "_dx2_list", self._dx2.tolist())
        object.__setattr__(self, "_data_list", data.tolist())

    def _potential_scalar(self, h: float) -> float:
        # plain floats beat numpy for a handful of sensors; this is the sampler's hot path
        if not h > 0:
            return math.inf
        hh = h * h
        total = 0.0
        for dx2, d in zip(self._dx2_list, self._data_list):
            r = dx2 + hh
            res = h / (r * math.sqrt(r)) - d
            total += res * res
        dh = h - self.prior_mean
        return total / (2.0 * self.sigma ** 2) + dh * dh / (2.0 * self.prior_std ** 2)

    def potential_batch(self, h):
        """Posterior potential for an array of depths; +inf where h <= 0."""
        h = np.asarray(h, dtype=float)
        if h.size <= 8 and self.sensors.size <= 16:
            return np.array([self._potential_scalar(v) for v in h.ravel().tolist()]).reshape(h.shape)
        pos = h > 0
        hc = np.where(pos, h, 1.0)
        hh = hc[..., None]
        r = self._dx2 + hh * hh
        res = hh / (r * np.sqrt(r)) - self.data
        misfit = np.einsum("...j,...j->...", res, res) / (2.0 * self.sigma ** 2)
        dh = hc - self.prior_mean
        out = misfit + dh * dh / (2.0 * self.prior_std ** 2)
        return out if pos.all() else np.where(pos, out, np.inf)

    def to_dict(self) -> dict:
        return {
            "x_f": self.x_f,
            "sensors": self.sensors.tolist(),
            "sigma": self.sigma,
            "data": self.data.tolist(),
            "prior_mean": self.prior_mean,
            "prior_std": self.prior_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GravityModel":
        return cls(d["x_f"], d["sensors"], d["sigma"], d["data"], d["prior_mean"], d["prior_std"])


def gravity_potential(h: float, model: GravityModel) -> float:
    """Data misfit plus Gaussian prior in h, up to an additive constant. +inf for h <= 0."""
    return float(model.potential_batch(h))


def make_gravity_problem(true_h: float = 0.2, x_f: float = 0.3, sensors=PAPER_SENSORS,
                         sigma: float = 0.1, prior_mean: float = 0.3, prior_std: float = 0.05,
                         seed: int = 0, noise: bool = True) -> tuple[GravityModel, dict]:
    """Synthetic data d_j = g(true_h, x_s(j)) + N(0, sigma^2), seeded."""
    sensors = np.asarray(sensors, dtype=float)
    clean = np.atleast_1d(gravity_forward(true_h, sensors, x_f))
    rng = np.random.Generator(np.random.PCG64(seed))
    eta = rng.standard_normal(sensors.size) * sigma if noise else np.zeros(sensors.size)
    model = GravityModel(x_f, sensors, sigma, clean + eta, prior_mean, prior_std)
    record = {"true_h": true_h, "seed": seed, "noise": eta.tolist(), **model.to_dict()}
    return model, record


class _GravityField:
    def __init__(self, model: GravityModel):
        self.model = model

    def __call__(self, z):
        return self.model.potential_batch(np.asarray(z)[..., 0])


class _ForwardDifference:
    """Classical forward-difference gradient, the baseline derivative at q == 1."""

    def __init__(self, field: ScalarField, step: float):
        self.field = field
        self.step = step

    def __call__(self, x, dp):
        x = np.asarray(x, dtype=float)
        zs = np.vstack([x, x[None, :] + self.step * np.eye(x.size)])
        vals = self.field.batch(zs)
        return (vals[1:] - vals[0]) / self.step


def gravity_hamiltonian(model: GravityModel, forward_difference_step: float | None = None,
                        mass: float = 1.0) -> HamiltonianSpec:
    """Separable Hamiltonian over the depth h.

    With ``forward_difference_step`` the force uses a forward difference of U
    instead of the Jackson derivative (the classical-HMC comparison).
    """
    field = ScalarField(_GravityField(model), 1)
    qgrad = None if forward_difference_step is None else _ForwardDifference(field, forward_difference_step)
    return HamiltonianSpec(field, np.array([mass]), potential_qgrad=qgrad)


def posterior_mode(model: GravityModel, bounds=(1e-4, 1.0), n_grid: int = 4001) -> float:
    """Global minimizer of the potential over ``bounds``: grid scan, then a bounded refine."""
    grid = np.linspace(bounds[0], bounds[1], n_grid)
    k = int(np.argmin(model.potential_batch(grid)))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
    res = minimize_scalar(lambda h: gravity_potential(h, model), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x)
