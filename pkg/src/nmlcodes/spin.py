"""NML code of independent spins (single spin and paramagnet)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .core import SpinSample, xlogx
from .errors import InvalidInputError


@dataclass(frozen=True)
class ParamagnetSpec:
    n: int
    N: int

    def __post_init__(self):
        if self.n < 1 or self.N < 1:
            raise InvalidInputError("n and N must be positive")


def single_spin_log_weights(N: int) -> np.ndarray:
    """``log[C(N,l) (l/N)^l (1-l/N)^(N-l)]`` for ``l = 0..N`` (``0^0 = 1``)."""
    if N < 1:
        raise InvalidInputError("N must be positive")
    ell = np.arange(N + 1, dtype=float)
    return gammaln(N + 1) - gammaln(ell + 1) - gammaln(N - ell + 1) + xlogx(ell) + xlogx(N - ell) - xlogx(N)


def single_spin_nml_pmf(N: int) -> np.ndarray:
    """NML distribution of the number of up spins ``l = 0..N``."""
    lw = single_spin_log_weights(N)
    return np.exp(lw - logsumexp(lw))


def magnetization_grid(N: int) -> np.ndarray:
    return (2 * np.arange(N + 1) - N) / N


def arcsine_density(m):
    m = np.asarray(m, dtype=float)
    return 1.0 / (np.pi * np.sqrt(1.0 - m**2))


def arcsine_cdf(m):
    return np.arcsin(np.clip(m, -1, 1)) / np.pi + 0.5


def ml_field(m):
    """Maximum-likelihood field of a single spin with magnetization m."""
    return np.arctanh(m)


def single_spin_log_likelihood(m: float, h: float, N: int = 1) -> float:
    return float(N * (m * h - np.log(2 * np.cosh(h))))


def paramagnet_complexity(spec: ParamagnetSpec, method: str = "exact") -> float:
    """Parametric complexity in nats: n times the single-spin value."""
    if method == "exact":
        return float(spec.n * logsumexp(single_spin_log_weights(spec.N)))
    if method == "asymptotic":
        return float(spec.n * 0.5 * math.log(math.pi * spec.N / 2))
    raise InvalidInputError(f"unknown method {method!r}")


def sample_up_counts(N: int, size, rng: np.random.Generator) -> np.ndarray:
    """Exact inverse-CDF draws of the number of up spins."""
    cdf = np.cumsum(single_spin_nml_pmf(N))
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(size), side="right")


def sample_paramagnet_nml(spec: ParamagnetSpec, seed: int) -> SpinSample:
    """Exact draw of a paramagnet NML sample of shape ``(N, n)``.

    Each spin gets its own up-count from the single-spin NML, then the up
    positions are a uniform random subset of the N observations.
    """
    rng = np.random.default_rng(seed)
    ells = sample_up_counts(spec.N, spec.n, rng)
    spins = -np.ones((spec.N, spec.n), dtype=np.int8)
    for i, ell in enumerate(ells):
        spins[rng.permutation(spec.N)[:ell], i] = 1
    return SpinSample(spins)
