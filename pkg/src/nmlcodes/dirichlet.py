"""NML code of the Dirichlet (categorical) model.

A sample is summarized by its frequency profile ``(k_1, ..., k_S)``; the
maximum-likelihood estimate is ``k_s / N`` so the unnormalized NML weight of a
profile is ``N!/prod k_s! * prod (k_s/N)^k_s``.

The typical-frequency distribution is
``q_beta(k|z) ∝ k^((1-beta) k) e^(-(1+z) k) / k!`` on ``k = 0..N``; ``beta = 0``
is the untilted NML and ``z`` is fixed by the saddle condition ``<k> = N/S``.
"""

from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import gammaln, logsumexp

from .core import FrequencyProfile, LN2, resolution_from_counts, xlogx
from .errors import BudgetExceededError, InvalidInputError, NumericalError
from .nml_mcmc import ChainConfig

DEFAULT_ENUMERATION_BUDGET = 50_000_000
DEFAULT_REJECTION_BUDGET = 1_000_000


@dataclass(frozen=True)
class DirichletSpec:
    S: int
    N: int

    def __post_init__(self):
        if self.S < 1 or self.N < 1:
            raise InvalidInputError("S and N must be positive")

    @property
    def rho(self) -> float:
        return self.N / self.S


@dataclass(frozen=True)
class SaddleSolution:
    z_star: float
    log_normalization: float
    mean_k: float
    var_k: float
    beta: float
    rho: float

    @property
    def normalization(self) -> float:
        return math.exp(self.log_normalization)

    @property
    def Phi(self) -> float:
        return self.rho * self.z_star + self.log_normalization


# --- q_beta(k|z) -------------------------------------------------------------


def _log_q_base(k_max: int, beta: float) -> np.ndarray:
    k = np.arange(k_max + 1, dtype=float)
    return (1.0 - beta) * xlogx(k) - k - gammaln(k + 1.0)


def log_q_weights(z: float, beta: float, k_max: int) -> np.ndarray:
    """Unnormalized ``log q_beta(k|z)`` for ``k = 0..k_max`` (the k=0 entry is 0)."""
    with np.errstate(over="ignore", invalid="ignore"):
        lw = _log_q_base(k_max, beta) - z * np.arange(k_max + 1)
    if not np.all(np.isfinite(lw)):
        raise NumericalError("weight overflow")
    return lw


def q_distribution(z: float, beta: float, k_max: int) -> np.ndarray:
    lw = log_q_weights(z, beta, k_max)
    return np.exp(lw - logsumexp(lw))


def q_of_k(k: int, z: float, beta: float = 0.0, k_max: int | None = None) -> float:
    """Probability ``q_beta(k|z)``, normalized over ``0..k_max``."""
    if k < 0:
        raise InvalidInputError("k must be non-negative")
    if k_max is None:
        raise InvalidInputError("k_max is required (use the sample size N)")
    if k > k_max:
        return 0.0
    lw = log_q_weights(z, beta, k_max)
    return float(np.exp(lw[k] - logsumexp(lw)))


def _q_moments(base: np.ndarray, z: float) -> tuple[float, float, float]:
    k = np.arange(base.size, dtype=float)
    lw = base - z * k
    if not np.all(np.isfinite(lw)):
        raise NumericalError("weight overflow")
    log_norm = logsumexp(lw)
    p = np.exp(lw - log_norm)
    mean = float(p @ k)
    var = float(p @ (k - mean) ** 2)
    return float(log_norm), mean, var


def solve_saddle(spec: DirichletSpec, beta: float = 0.0, rtol: float = 1e-8) -> SaddleSolution:
    """Find ``z*`` with ``<k>_{z*,beta} = rho`` by bisection on a geometrically grown bracket."""
    rho = spec.rho
    base = _log_q_base(spec.N, beta)

    def mean_at(z):
        return _q_moments(base, z)[1]

    z0 = 1.0 / (2.0 * rho)
    hi = z0
    for _ in range(200):
        if mean_at(hi) < rho:
            break
        hi = 2.0 * hi if hi > 0 else -0.5 * hi + 1e-12
    else:
        raise NumericalError("saddle not bracketed")
    lo, step = z0, z0
    for _ in range(200):
        if mean_at(lo) > rho:
            break
        lo -= step
        step *= 2.0
        if abs(lo) > 1e8:
            raise NumericalError("saddle not bracketed")
    else:
        raise NumericalError("saddle not bracketed")

    for _ in range(400):
        mid = 0.5 * (lo + hi)
        m = mean_at(mid)
        if abs(m - rho) < 1e-3 * rtol * rho or mid in (lo, hi):
            break
        if m > rho:
            lo = mid
        else:
            hi = mid
    log_norm, mean, var = _q_moments(base, mid)
    if abs(mean - rho) >= rtol * rho:
        raise NumericalError("saddle not bracketed")
    return SaddleSolution(mid, log_norm, mean, var, float(beta), rho)


# --- NML weights and parametric complexity -----------------------------------


def nml_log_weight(profile) -> float:
    """``log[N!/prod k_s! * prod (k_s/N)^k_s]`` for a profile or count vector."""
    if isinstance(profile, FrequencyProfile):
        k = np.fromiter(profile.counts.values(), dtype=float)
    else:
        k = np.asarray(profile, dtype=float)
    N = k.sum()
    return float(gammaln(N + 1) - gammaln(k + 1).sum() + xlogx(k).sum() - xlogx(N))


def composition_count(S: int, N: int) -> int:
    """Number of profiles ``(k_1..k_S)`` with ``sum k = N``."""
    return math.comb(N + S - 1, S - 1)


def enumerate_profiles(S: int, N: int) -> Iterator[tuple[int, ...]]:
    """Every composition of N into S non-negative parts, in lexicographic order."""
    if S == 1:
        yield (N,)
        return
    for first in range(N, -1, -1):
        for rest in enumerate_profiles(S - 1, N - first):
            yield (first, *rest)


def _log_shtarkov_exact(S: int, N: int) -> float:
    # sum over compositions of prod k^k/k!, accumulated one state at a time
    term = xlogx(np.arange(N + 1, dtype=float)) - gammaln(np.arange(N + 1) + 1.0)
    acc = term.copy()
    for _ in range(S - 1):
        nxt = np.empty_like(acc)
        for n in range(N + 1):
            nxt[n] = logsumexp(acc[: n + 1] + term[n::-1])
        acc = nxt
    return float(gammaln(N + 1) - xlogx(N) + acc[N])


def _log_binary_complexity(N: int) -> float:
    ell = np.arange(N + 1, dtype=float)
    lw = gammaln(N + 1) - gammaln(ell + 1) - gammaln(N - ell + 1) + xlogx(ell) + xlogx(N - ell) - xlogx(N)
    return float(logsumexp(lw))


def _log_complexity_recursion(S: int, N: int) -> float:
    # C(K+2) = C(K+1) + (N/K) C(K), linear in S
    logs = [0.0, _log_binary_complexity(N)]
    for K in range(1, S - 1):
        logs.append(float(np.logaddexp(logs[-1], math.log(N / K) + logs[-2])))
    return logs[S - 1]


def parametric_complexity(
    spec: DirichletSpec, method: str = "exact", budget: int = DEFAULT_ENUMERATION_BUDGET
) -> float:
    """Log of the NML normalizer, in nats.

    ``exact`` sums the weights of all compositions (refused beyond ``budget``
    compositions); ``recursion`` is the same exact quantity via the linear
    recurrence in S; ``saddle`` is the Gaussian approximation around ``z*``;
    ``asymptotic`` is the large-``rho`` closed form.
    """
    S, N, rho = spec.S, spec.N, spec.rho
    if method == "exact":
        if composition_count(S, N) > budget:
            raise BudgetExceededError("enumeration budget exceeded")
        return _log_shtarkov_exact(S, N)
    if method == "recursion":
        return _log_complexity_recursion(S, N)
    if method == "saddle":
        sol = solve_saddle(spec, 0.0)
        return float(0.5 * math.log(rho) + S * sol.Phi - 0.5 * math.log(sol.var_k))
    if method == "asymptotic":
        return float(0.5 * S * (1.0 + math.log(rho)) - 0.5 * math.log(2.0 * rho))
    raise InvalidInputError(f"unknown method {method!r}")


def complexity_report(spec: DirichletSpec, method: str = "exact", **kw) -> dict:
    R = parametric_complexity(spec, method, **kw)
    return {"S": spec.S, "N": spec.N, "rho": spec.rho, "method": method, "R_nats": R, "R_bits": R / LN2}


def exact_profile_table(S: int, N: int, budget: int = DEFAULT_ENUMERATION_BUDGET):
    """All profiles with their exact NML log-probabilities (multiplicity included).

    Returns ``(profiles, log_prob)`` with ``profiles`` of shape ``(M, S)``.
    """
    if composition_count(S, N) > budget:
        raise BudgetExceededError("enumeration budget exceeded")
    prof = np.array(list(enumerate_profiles(S, N)), dtype=np.int64)
    kf = prof.astype(float)
    lw = gammaln(N + 1) - gammaln(kf + 1).sum(1) + xlogx(kf).sum(1) - xlogx(N)
    return prof, lw - logsumexp(lw)


def coding_cost(profile, R: float) -> float:
    """Code length ``N * resolution + R`` in nats of a sample under the Dirichlet NML."""
    if isinstance(profile, FrequencyProfile):
        N = profile.N
    else:
        N = int(np.asarray(profile).sum())
    return float(N * resolution_from_counts(profile) + R)


# --- samplers ---------------------------------------------------------------


@njit(cache=True)
def _exchange_kernel(k, balls, g, one_minus_beta, uniform_frac, u):
    # Each step moves one randomly chosen ball (observation) to another state.
    # The destination is uniform with probability uniform_frac, otherwise the
    # state of another random ball; the Hastings factor corrects for that.
    S = k.shape[0]
    N = balls.shape[0]
    accepted = 0
    for t in range(u.shape[0]):
        b = int(u[t, 0] * N)
        i = balls[b]
        if u[t, 1] < uniform_frac:
            j = int(u[t, 2] * S)
        else:
            j = balls[int(u[t, 2] * N)]
        if j == i:
            continue
        ki = k[i]
        kj = k[j]
        log_r = one_minus_beta * (g[ki - 1] - g[ki] + g[kj + 1] - g[kj])
        if uniform_frac < 1.0:
            fwd = uniform_frac / S + (1.0 - uniform_frac) * kj / N
            rev = uniform_frac / S + (1.0 - uniform_frac) * (ki - 1) / N
            if rev <= 0.0:
                continue
            log_r += np.log(rev) - np.log(fwd)
        if log_r >= 0.0 or u[t, 3] < np.exp(log_r):
            k[i] = ki - 1
            k[j] = kj + 1
            balls[b] = j
            accepted += 1
    return accepted


def exchange_log_acceptance(k, i: int, j: int, beta: float, uniform_frac: float = 0.5) -> float:
    """Log Metropolis-Hastings ratio of moving one observation from state i to j."""
    k = np.asarray(k)
    S, N = k.size, int(k.sum())
    ki, kj = int(k[i]), int(k[j])
    g = xlogx(np.array([ki - 1, ki, kj, kj + 1], dtype=float))
    log_r = (1.0 - beta) * (g[0] - g[1] + g[3] - g[2])
    if uniform_frac < 1.0:
        fwd = uniform_frac / S + (1 - uniform_frac) * kj / N
        rev = uniform_frac / S + (1 - uniform_frac) * (ki - 1) / N
        log_r += math.log(rev) - math.log(fwd) if rev > 0 else -math.inf
    return float(log_r)


def exchange_proposal_probability(k, i: int, j: int, uniform_frac: float = 0.5) -> float:
    """Probability that one kernel step proposes moving an observation from i to j (i != j)."""
    k = np.asarray(k)
    S, N = k.size, int(k.sum())
    return float(k[i] / N * (uniform_frac / S + (1 - uniform_frac) * k[j] / N))


@dataclass
class ProfileChainResult:
    profiles: list[np.ndarray]
    acceptance_rate: float
    final: np.ndarray


def _initial_balls(S: int, N: int, init) -> np.ndarray:
    if init is None:
        return (np.arange(N) % S).astype(np.int64)
    init = np.asarray(init, dtype=np.int64)
    if init.size != S or init.sum() != N or np.any(init < 0):
        raise InvalidInputError("initial profile must have S entries summing to N")
    return np.repeat(np.arange(S, dtype=np.int64), init)


def run_profile_chain(
    spec: DirichletSpec,
    beta: float,
    chain: ChainConfig,
    init=None,
    uniform_frac: float = 0.5,
    chunk: int = 1 << 18,
) -> ProfileChainResult:
    """Metropolis chain over profiles targeting the (tilted) Dirichlet NML.

    Records a copy of the profile every ``chain.thin`` moves after
    ``chain.burn_in``; deterministic given ``chain.seed``.
    """
    S, N = spec.S, spec.N
    if S == 1:
        k = np.array([N], dtype=np.int64)
        n_rec = len(range(chain.burn_in + chain.thin, chain.steps + 1, chain.thin))
        return ProfileChainResult([k.copy() for _ in range(n_rec)], 0.0, k)
    balls = _initial_balls(S, N, init)
    k = np.bincount(balls, minlength=S).astype(np.int64)
    g = xlogx(np.arange(N + 2, dtype=float))
    rng = np.random.default_rng(chain.seed)
    profiles: list[np.ndarray] = []
    accepted = 0
    t = 0
    next_record = chain.burn_in + chain.thin
    while t < chain.steps:
        stop = min(chain.steps, t + chunk, next_record if next_record <= chain.steps else chain.steps)
        n = stop - t
        u = rng.random((n, 4))
        accepted += _exchange_kernel(k, balls, g, 1.0 - beta, uniform_frac, u)
        t = stop
        if t == next_record:
            profiles.append(k.copy())
            next_record += chain.thin
    return ProfileChainResult(profiles, accepted / max(chain.steps, 1), k)


def factorized_profiles(
    spec: DirichletSpec,
    beta: float,
    n_samples: int,
    seed: int,
    budget: int = DEFAULT_REJECTION_BUDGET,
) -> list[np.ndarray]:
    """Draw each ``k_s`` i.i.d. from ``q_beta(k|z*)`` and keep draws with ``sum k = N``."""
    S, N = spec.S, spec.N
    sol = solve_saddle(spec, beta)
    cdf = np.cumsum(q_distribution(sol.z_star, beta, N))
    cdf /= cdf[-1]
    rng = np.random.default_rng(seed)
    batch = max(1, min(100_000, 20_000_000 // S))
    out: list[np.ndarray] = []
    tried = 0
    while len(out) < n_samples:
        if tried >= budget:
            raise BudgetExceededError("rejection budget exceeded")
        rows = min(batch, budget - tried)
        draws = np.searchsorted(cdf, rng.random((rows, S)), side="right").astype(np.int64)
        tried += rows
        for row in draws[draws.sum(axis=1) == N]:
            out.append(row)
            if len(out) == n_samples:
                break
    return out


def sample_nml(spec: DirichletSpec, beta: float, chain: ChainConfig, method: str = "exchange") -> FrequencyProfile:
    """One profile from the tilted NML.

    ``exchange`` runs the exact Metropolis chain for ``chain.steps`` moves and
    returns its final state; ``factorized`` uses the i.i.d. rejection sampler
    seeded with ``chain.seed``.
    """
    if method == "exchange":
        res = run_profile_chain(spec, beta, chain)
        return FrequencyProfile.from_counts(res.final)
    if method == "factorized":
        return FrequencyProfile.from_counts(factorized_profiles(spec, beta, 1, chain.seed)[0])
    raise InvalidInputError(f"unknown sampler {method!r}")


def pooled_frequency_histogram(profiles, k_max: int) -> np.ndarray:
    """Fraction of states with each count ``k = 0..k_max``, pooled over profiles."""
    counts = np.zeros(k_max + 1)
    for p in profiles:
        counts += np.bincount(np.asarray(p), minlength=k_max + 1)[: k_max + 1]
    return counts / counts.sum()


def ks_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance between two pmfs on the same integer support."""
    return float(np.max(np.abs(np.cumsum(p) - np.cumsum(q))))
