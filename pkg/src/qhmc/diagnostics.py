"""Mixing diagnostics: autocorrelation, integrated autocorrelation time and
effective sample size.

An undefined result (non-finite or constant series) is carried as ``nan`` with
``valid=False``; the CSV writers render it as ``nan`` / ``N/A``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["MixingReport", "autocorrelation", "iat", "summarize", "DEFAULT_K_MAX", "MIN_VARIANCE"]

DEFAULT_K_MAX = 500
MIN_VARIANCE = 1e-12


@dataclass(frozen=True)
class MixingReport:
    acf: np.ndarray
    iat: float
    ess: float
    ess_per_second: float
    accept_rate: float
    valid: bool
    n: int
    n_divergent: int = 0

    @property
    def degenerate(self) -> bool:
        """True when the run shows the failure modes reported as nan rows:
        an undefined ESS or at least one divergent trajectory."""
        return (not self.valid) or self.n_divergent > 0


def _series_ok(y: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(y))) and float(np.var(y)) >= MIN_VARIANCE


def autocorrelation(series, k_max: int) -> np.ndarray:
    """Biased sample ACF rho_0..rho_k_max, normalized by the lag-0 sum.

    Returns an all-nan vector for a non-finite or (numerically) constant series.
    """
    y = np.asarray(series, dtype=float).ravel()
    if k_max < 1:
        raise ValueError("k_max must be positive")
    if y.size <= k_max:
        raise ValueError(f"series of length {y.size} is too short for k_max={k_max}")
    if not _series_ok(y):
        return np.full(k_max + 1, np.nan)
    y = y - y.mean()
    n = y.size
    nfft = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(y, nfft)
    acov = np.fft.irfft(spec * np.conj(spec), nfft)[:k_max + 1]
    return acov / acov[0]


def iat(acf, k_max: int = DEFAULT_K_MAX, truncate_at_first_negative: bool = False) -> float:
    """tau = 1 + 2 * sum_{k=1}^{K} rho_k with K = min(k_max, len(acf) - 1).

    With ``truncate_at_first_negative`` the sum stops before the first negative rho_k.
    """
    rho = np.asarray(acf, dtype=float)
    if rho.size == 0 or not np.all(np.isfinite(rho)):
        return math.nan
    kk = min(k_max, rho.size - 1)
    tail = rho[1:kk + 1]
    if truncate_at_first_negative:
        neg = np.flatnonzero(tail < 0)
        if neg.size:
            tail = tail[:neg[0]]
    return float(1.0 + 2.0 * np.sum(tail))


def summarize(chain, burn_in: int | None = None, wall_time: float | None = None,
              coordinate: int = 0, k_max: int = DEFAULT_K_MAX,
              truncate_at_first_negative: bool = False, min_iat: float = 1.0) -> MixingReport:
    """Mixing summary of one coordinate of a :class:`~qhmc.sampler.ChainOutput`.

    Burn-in rows are dropped before the ACF; the acceptance rate covers the
    whole chain. ``tau`` is floored at ``min_iat`` (so ESS never exceeds N by
    default) and ESS = N / tau.
    """
    samples = np.asarray(chain.samples)
    if samples.ndim == 1:
        samples = samples[:, None]
    if not 0 <= coordinate < samples.shape[1]:
        raise IndexError(f"coordinate {coordinate} out of range for dimension {samples.shape[1]}")
    burn = chain.burn_in if burn_in is None else burn_in
    if not 0 <= burn < samples.shape[0]:
        raise ValueError("chain must contain more than burn_in samples")
    wall = chain.wall_time if wall_time is None else wall_time
    y = samples[burn:, coordinate]
    n = y.size
    accept_rate = float(np.mean(chain.accepted))
    n_div = int(np.sum(getattr(chain, "diverged", 0)))

    kk = min(k_max, n - 1)
    if kk < 1 or not _series_ok(y):
        return MixingReport(np.full(max(kk, 0) + 1, np.nan), math.nan, math.nan, math.nan,
                            accept_rate, False, n, n_div)
    acf = autocorrelation(y, kk)
    tau = max(iat(acf, kk, truncate_at_first_negative), min_iat)
    ess = n / tau
    eps = ess / wall if wall > 0 else math.nan
    return MixingReport(acf, tau, ess, eps, accept_rate, True, n, n_div)
