"""Benchmark potentials U(x) for the target density exp(-U(x)).

Every evaluator works on arrays of shape ``(..., d)`` and returns ``(...)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, InvalidParameterError
from .qcalc import ScalarField

__all__ = [
    "NamedPotential",
    "double_well",
    "super_flat",
    "discontinuous",
    "octic",
    "stiff_2d",
    "gaussian",
    "get_potential",
    "POTENTIALS",
]


@dataclass(frozen=True, eq=False)
class NamedPotential:
    name: str
    dimension: int
    field: ScalarField
    analytic_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, x) -> float:
        return self.field(x)

    def gradient(self, x) -> np.ndarray:
        if self.analytic_gradient is None:
            raise NotImplementedError(f"{self.name} has no analytic gradient")
        return np.asarray(self.analytic_gradient(np.asarray(x, dtype=float)), dtype=float)


def _double_well(x):
    x = x[..., 0]
    return (x * x - 1.0) ** 2


def double_well() -> NamedPotential:
    """U(x) = (x^2 - 1)^2, minima at +-1."""
    return NamedPotential("double_well", 1, ScalarField(_double_well, 1),
                          lambda x: 4.0 * x * (x * x - 1.0))


def _super_flat(x):
    return np.sqrt(np.abs(x[..., 0]))


def super_flat() -> NamedPotential:
    """U(x) = |x|^(1/2). Cusp at 0, so no analytic gradient is attached."""
    return NamedPotential("super_flat", 1, ScalarField(_super_flat, 1))


def _discontinuous(x):
    x = x[..., 0]
    return 0.5 * x * x + np.where(x >= 0.0, 3.0, 0.0)


def discontinuous() -> NamedPotential:
    """Harmonic well with a step of height 3 at the origin (x = 0 is on the upper branch)."""
    return NamedPotential("discontinuous", 1, ScalarField(_discontinuous, 1), lambda x: x)


def _octic(x):
    # products rather than ** 8: exactly even, and identical for scalars and arrays
    x2 = x[..., 0] * x[..., 0]
    x4 = x2 * x2
    return x4 * x4


def octic() -> NamedPotential:
    """U(x) = x^8."""
    return NamedPotential("octic", 1, ScalarField(_octic, 1), lambda x: 8.0 * x ** 7)


def _stiff_2d(x):
    r2 = np.sum(x * x, axis=-1)
    r4 = r2 * r2
    return 0.125 * (r4 * r4)


def _stiff_2d_grad(x):
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    return x * (r2 * r2 * r2)


def stiff_2d() -> NamedPotential:
    """U(x1, x2) = (x1^2 + x2^2)^4 / 8."""
    return NamedPotential("stiff_2d", 2, ScalarField(_stiff_2d, 2), _stiff_2d_grad)


class _Gaussian:
    # a class rather than a closure so the potential pickles
    def __init__(self, variance):
        self.variance = variance

    def __call__(self, x):
        return 0.5 * x[..., 0] ** 2 / self.variance

    def gradient(self, x):
        return x / self.variance


def gaussian(variance: float = 1.0) -> NamedPotential:
    """Zero-mean normal target, U(x) = x^2 / (2 variance)."""
    if not variance > 0:
        raise InvalidParameterError(f"variance must be positive, got {variance!r}")
    g = _Gaussian(float(variance))
    return NamedPotential("gaussian", 1, ScalarField(g, 1), g.gradient)


POTENTIALS = {
    "double_well": double_well,
    "super_flat": super_flat,
    "discontinuous": discontinuous,
    "octic": octic,
    "stiff_2d": stiff_2d,
    "gaussian": gaussian,
}


def get_potential(name: str, **kwargs) -> NamedPotential:
    try:
        factory = POTENTIALS[name]
    except KeyError:
        known = ", ".join(sorted(POTENTIALS))
        raise ConfigError(f"unknown target {name!r}; known targets: {known}") from None
    return factory(**kwargs)
