"""Numerical q-calculus: Jackson derivatives, dilatation and the q-deformed
vector fields that drive the q-leapfrog integrator.

The Jackson derivative of ``f`` in coordinate ``i`` is

    (f(z with z_i -> q**2 z_i) - f(z)) / ((q**2 - 1) z_i)

It has removable singularities at ``q == 1`` and ``z_i == 0``; in both cases we
fall back to a central finite difference, which is the common limit for
differentiable ``f``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameterError, NonFiniteResultError, UnsupportedDimensionError

__all__ = [
    "DeformationParameter",
    "ScalarField",
    "HamiltonianSpec",
    "jackson_dx",
    "jackson_gradient",
    "jackson_jacobian",
    "fd_steps",
    "dilate",
    "velocity_field",
    "force_field",
    "separable_force_and_potential",
    "poisson_bracket_q",
]


@dataclass(frozen=True)
class DeformationParameter:
    """The deformation parameter ``q`` plus the fallback tolerances.

    ``q == 0`` is admitted: the Jackson quotient then becomes a secant to the
    origin. Negative or non-finite ``q`` is rejected.
    """

    q: float
    classical_tol: float = 1e-12
    zero_tol: float = 1e-8
    fd_step: float = 1e-6

    def __post_init__(self):
        if not math.isfinite(self.q) or self.q < 0:
            raise InvalidParameterError(f"q must be finite and non-negative, got {self.q!r}")
        for name in ("classical_tol", "zero_tol", "fd_step"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise InvalidParameterError(f"{name} must be positive, got {val!r}")

    @property
    def is_classical(self) -> bool:
        return abs(self.q - 1.0) < self.classical_tol

    @property
    def sqrt_q(self) -> float:
        return math.sqrt(self.q)

    @property
    def inv_sqrt_q(self) -> float:
        # q == 0 gives an infinite velocity scale; the integrator reports divergence
        return math.inf if self.q == 0 else 1.0 / math.sqrt(self.q)

    def with_q(self, q: float) -> "DeformationParameter":
        return DeformationParameter(q, self.classical_tol, self.zero_tol, self.fd_step)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A real function of a ``dim``-vector.

    When ``vectorized`` is true, ``func`` must accept an array of shape
    ``(..., dim)`` and return shape ``(...)``. Otherwise it is called row by row.
    """

    func: Callable[[np.ndarray], float]
    dim: int
    vectorized: bool = True

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidParameterError("dimension must be positive")

    def __call__(self, z) -> float:
        return float(self.func(np.asarray(z, dtype=float)))

    def batch(self, zs: np.ndarray) -> np.ndarray:
        if self.vectorized:
            return np.asarray(self.func(zs), dtype=float)
        return np.array([float(self.func(row)) for row in zs])


def _check_index(f: ScalarField, i: int):
    if not 0 <= i < f.dim:
        raise IndexError(f"coordinate {i} out of range for dimension {f.dim}")


def jackson_dx(f: ScalarField, z, i: int, dp: DeformationParameter) -> float:
    """Jackson derivative of ``f`` at ``z`` along coordinate ``i``."""
    _check_index(f, i)
    z = np.asarray(z, dtype=float).reshape(f.dim)
    return float(_jackson_coords(f, z, np.array([i]), dp)[0])


def jackson_gradient(f: ScalarField, z, dp: DeformationParameter) -> np.ndarray:
    """All coordinate-wise Jackson derivatives of ``f`` at ``z``, in one batched evaluation."""
    z = np.asarray(z, dtype=float).reshape(f.dim)
    return _jackson_coords(f, z, np.arange(f.dim), dp)


def _jackson_coords(f: ScalarField, z: np.ndarray, coords: np.ndarray, dp: DeformationParameter,
                    with_value: bool = False):
    # with_value also returns f(z), which every branch evaluates anyway
    q2 = dp.q * dp.q
    if not dp.is_classical:
        zc = z[coords]
        if (np.abs(zc) >= dp.zero_tol).all():
            n, d = coords.size, z.size
            zs = np.empty((n + 1, d))
            zs[:] = z
            if n == d:
                zs[1:].flat[::d + 1] = q2 * zc
            else:
                zs[np.arange(1, n + 1), coords] = q2 * zc
            vals = _finite_batch(f, zs)
            out = (vals[1:] - vals[0]) / ((q2 - 1.0) * zc)
            return (out, vals[0]) if with_value else out
        fb = np.abs(zc) < dp.zero_tol
    else:
        fb = np.ones(coords.size, dtype=bool)

    jc = coords[~fb]
    fc = coords[fb]
    h = fd_steps(z[fc], dp)
    nj, nf = jc.size, fc.size
    zs = np.repeat(z[None, :], 1 + nj + 2 * nf, axis=0)
    if nj:
        zs[1 + np.arange(nj), jc] = q2 * z[jc]
    plus = 1 + nj + 2 * np.arange(nf)
    zs[plus, fc] += h
    zs[plus + 1, fc] -= h
    vals = _finite_batch(f, zs)

    out = np.empty(coords.size)
    if nj:
        out[~fb] = (vals[1:1 + nj] - vals[0]) / ((q2 - 1.0) * z[jc])
    out[fb] = (vals[plus] - vals[plus + 1]) / (2 * h)
    return (out, vals[0]) if with_value else out


def fd_steps(zc, dp: DeformationParameter) -> np.ndarray:
    """Central-difference steps fd_step * s_i, s_i the power of two >= max(1, |z_i|).

    An absolute step stops resolving anything once |z_i| * eps exceeds it
    (z + h == z), which silently zeroes the derivative far from the origin.
    Rounding the scale to a power of two keeps the step constant between
    nearby points, so nested differences still cancel.
    """
    scale = np.exp2(np.ceil(np.log2(np.maximum(1.0, np.abs(zc)))))
    return dp.fd_step * scale


def _finite_batch(f: ScalarField, zs: np.ndarray) -> np.ndarray:
    vals = f.batch(zs)
    if not np.isfinite(vals).all():
        bad = ~np.isfinite(vals)
        row = zs[int(np.argmax(bad))]
        raise NonFiniteResultError(f"non-finite value {vals[bad][0]} at {row.tolist()}", point=row)
    return vals


def jackson_jacobian(g: Callable[[np.ndarray], np.ndarray], z, dp: DeformationParameter) -> np.ndarray:
    """Jackson partials of a vector-valued ``g``: entry ``[i, j]`` is D_j g_i."""
    z = np.asarray(z, dtype=float)
    g0 = np.asarray(g(z), dtype=float)
    q2 = dp.q * dp.q
    jac = np.empty((g0.size, z.size))
    for j in range(z.size):
        if dp.is_classical or abs(z[j]) < dp.zero_tol:
            h = float(fd_steps(z[j], dp))
            zp, zm = z.copy(), z.copy()
            zp[j] += h
            zm[j] -= h
            col = (np.asarray(g(zp), dtype=float) - np.asarray(g(zm), dtype=float)) / (2 * h)
        else:
            zq = z.copy()
            zq[j] *= q2
            col = (np.asarray(g(zq), dtype=float) - g0) / ((q2 - 1.0) * z[j])
        jac[:, j] = col
    if not np.all(np.isfinite(jac)):
        raise NonFiniteResultError("non-finite Jackson partial", point=z)
    return jac


def dilate(z, q: float) -> np.ndarray:
    """Scale ``z`` componentwise by ``q``."""
    return np.asarray(z, dtype=float) * q


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """H(x, p) = U(x) + K(x, p) with diagonal mass.

    For ``separable=True`` the kinetic part is fixed to ``sum(p**2 / (2 m))``.
    Otherwise ``kinetic(x, p)`` must be given; it is evaluated on arrays of
    shape ``(..., d)`` and must satisfy ``K(x, -p) == K(x, p)``.

    ``potential_qgrad(x, dp)``, if set, replaces Jackson differencing of U in
    the force (adjoint gradients, forward-difference classical baselines).
    """

    potential: ScalarField
    mass: np.ndarray = None
    separable: bool = True
    kinetic: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    potential_qgrad: Optional[Callable[[np.ndarray, DeformationParameter], np.ndarray]] = None

    def __post_init__(self):
        d = self.potential.dim
        mass = np.ones(d) if self.mass is None else np.asarray(self.mass, dtype=float).reshape(-1)
        if mass.size == 1 and d > 1:
            mass = np.full(d, float(mass[0]))
        if mass.size != d:
            raise InvalidParameterError(f"mass has {mass.size} entries, potential dimension is {d}")
        if not np.all(mass > 0):
            raise InvalidParameterError("mass entries must be positive")
        object.__setattr__(self, "mass", mass)
        if not self.separable and self.kinetic is None:
            raise InvalidParameterError("non-separable Hamiltonian needs an explicit kinetic term")
        if self.separable and self.kinetic is not None:
            raise InvalidParameterError("separable Hamiltonians use the quadratic kinetic term")

    @property
    def dim(self) -> int:
        return self.potential.dim

    def kinetic_energy(self, x, p):
        p = np.asarray(p, dtype=float)
        if self.separable:
            return np.sum(p * p / (2.0 * self.mass), axis=-1)
        return self.kinetic(np.asarray(x, dtype=float), p)

    def energy(self, x, p) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            return float(self.potential(x) + self.kinetic_energy(x, p))

    @cached_property
    def kinetic_field(self) -> ScalarField:
        """K as a field over momentum only (separable case)."""
        inv2m = 1.0 / (2.0 * self.mass)
        return ScalarField(lambda p: np.sum(p * p * inv2m, axis=-1), self.dim)

    def phase_field(self) -> ScalarField:
        """H as a field over the stacked phase vector ``(x, p)``."""
        d = self.dim

        def h(z):
            z = np.asarray(z, dtype=float)
            x, p = z[..., :d], z[..., d:]
            return self.potential.func(x) + self.kinetic_energy(x, p)

        return ScalarField(h, 2 * d, vectorized=self.potential.vectorized)


def velocity_field(H: HamiltonianSpec, x, p, dp: DeformationParameter) -> np.ndarray:
    """q**(-1/2) times the Jackson p-gradient of p -> H(q x, p)."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if H.separable:
        # U(q x) cancels in every p-difference and the Jackson derivative of
        # p**2 / (2 m) is exactly (q**2 + 1) p / (2 m), at p == 0 as well
        g = (0.5 * (dp.q * dp.q + 1.0)) * p / H.mass
    else:
        xq = dilate(x, dp.q)
        field = ScalarField(lambda ps: H.potential.func(np.broadcast_to(xq, ps.shape))
                            + H.kinetic(np.broadcast_to(xq, ps.shape), ps), H.dim,
                            vectorized=H.potential.vectorized)
        g = jackson_gradient(field, p, dp)
    with np.errstate(invalid="ignore"):
        return dp.inv_sqrt_q * g


def force_field(H: HamiltonianSpec, x, p, dp: DeformationParameter) -> np.ndarray:
    """q**(1/2) times the Jackson x-gradient of x -> H(x, p); the dynamics use p' = -F."""
    x = np.asarray(x, dtype=float)
    if H.potential_qgrad is not None:
        g = np.asarray(H.potential_qgrad(x, dp), dtype=float)
        if not np.all(np.isfinite(g)):
            raise NonFiniteResultError("non-finite potential gradient", point=x)
    elif H.separable:
        g = jackson_gradient(H.potential, x, dp)
    else:
        p = np.asarray(p, dtype=float)
        field = ScalarField(lambda xs: H.potential.func(xs)
                            + H.kinetic(xs, np.broadcast_to(p, xs.shape)), H.dim,
                            vectorized=H.potential.vectorized)
        g = jackson_gradient(field, x, dp)
    return dp.sqrt_q * g


def separable_force_and_potential(H: HamiltonianSpec, x, dp: DeformationParameter):
    """Force of a separable H together with U(x), or ``None`` in its place when
    the force comes from ``potential_qgrad``."""
    if H.potential_qgrad is not None:
        return force_field(H, x, None, dp), None
    g, u = _jackson_coords(H.potential, np.asarray(x, dtype=float), np.arange(H.dim), dp, with_value=True)
    return dp.sqrt_q * g, float(u)


def poisson_bracket_q(f: ScalarField, g: ScalarField, z, dp: DeformationParameter) -> float:
    """q-Poisson bracket on the 2-dimensional phase space ``z = (x, p)``.

    {f, g}_q = q**(-1/2) D_p[g(q x, p)] D_x f - q**(1/2) D_x g D_p f
    """
    if f.dim != 2 or g.dim != 2:
        raise UnsupportedDimensionError("the q-Poisson bracket is implemented for one position coordinate only")
    z = np.asarray(z, dtype=float).reshape(2)
    q = dp.q
    g_dilated = ScalarField(lambda zs: g.func(zs * np.array([q, 1.0])), 2, vectorized=g.vectorized)
    dfx = jackson_dx(f, z, 0, dp)
    dfp = jackson_dx(f, z, 1, dp)
    first = _product(dp.inv_sqrt_q, jackson_dx(g_dilated, z, 1, dp) if dfx else 0.0, dfx)
    second = _product(dp.sqrt_q, jackson_dx(g, z, 0, dp) if dfp else 0.0, dfp)
    return float(first - second)


def _product(*factors):
    # an exact zero wins over the infinite q**(-1/2) scale at q == 0
    if any(f == 0.0 for f in factors):
        return 0.0
    return math.prod(factors)
