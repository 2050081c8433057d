"""Pairwise (Sherrington-Kirkpatrick) spin model fitted by exact enumeration."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from ..errors import BudgetExceededError, FitError, InvalidInputError

MAX_SPINS = 20
_CHUNK = 1 << 14
MAX_STEP = 2.0


@lru_cache(maxsize=8)
def all_spin_states(n: int) -> np.ndarray:
    """The ``2^n`` configurations as rows of +-1, state index = bit pattern."""
    if n > MAX_SPINS:
        raise BudgetExceededError("state space too large")
    idx = np.arange(2**n, dtype=np.int64)[:, None]
    bits = (idx >> np.arange(n)) & 1
    states = (2 * bits - 1).astype(np.int8)
    states.setflags(write=False)
    return states


@dataclass(frozen=True, eq=False)
class SKParams:
    J: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        h = np.array(self.h, dtype=float).ravel()
        n = h.size
        if J.shape != (n, n):
            raise InvalidInputError("J must be n x n")
        if not np.allclose(J, J.T, atol=1e-12) or np.any(np.diag(J) != 0):
            raise InvalidInputError("J must be symmetric with zero diagonal")
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "h", h)

    @property
    def n(self) -> int:
        return self.h.size

    def to_vector(self) -> np.ndarray:
        iu = np.triu_indices(self.n, 1)
        return np.concatenate([self.h, self.J[iu]])

    @classmethod
    def from_vector(cls, theta: np.ndarray, n: int) -> SKParams:
        J = np.zeros((n, n))
        iu = np.triu_indices(n, 1)
        J[iu] = theta[n:]
        return cls(J + J.T, theta[:n])


@dataclass(frozen=True, eq=False)
class SKMoments:
    m: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float).ravel()
        c = np.array(self.c, dtype=float)
        if c.shape != (m.size, m.size):
            raise InvalidInputError("c must be n x n")
        if np.any(np.abs(m) > 1 + 1e-12) or np.any(np.abs(c) > 1 + 1e-12):
            raise InvalidInputError("moments must lie in [-1, 1]")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.m.size

    def to_vector(self) -> np.ndarray:
        iu = np.triu_indices(self.n, 1)
        return np.concatenate([self.m, self.c[iu]])


def _features(states: np.ndarray) -> np.ndarray:
    s = states.astype(float)
    n = s.shape[1]
    iu, ju = np.triu_indices(n, 1)
    return np.concatenate([s, s[:, iu] * s[:, ju]], axis=1)


def moments_from_spins(spins: np.ndarray) -> SKMoments:
    s = np.asarray(spins, dtype=float)
    N = s.shape[0]
    c = s.T @ s / N
    np.fill_diagonal(c, 1.0)
    return SKMoments(s.mean(axis=0), c)


def _energies(params: SKParams, states: np.ndarray) -> np.ndarray:
    s = states.astype(float)
    # s J s counts each pair twice
    return s @ params.h + 0.5 * np.einsum("ki,ij,kj->k", s, params.J, s)


def sk_log_partition(params: SKParams) -> float:
    return float(logsumexp(_energies(params, all_spin_states(params.n))))


def sk_model_moments(params: SKParams) -> SKMoments:
    states = all_spin_states(params.n).astype(float)
    e = _energies(params, states)
    p = np.exp(e - logsumexp(e))
    m = p @ states
    c = states.T @ (states * p[:, None])
    np.fill_diagonal(c, 1.0)
    return SKMoments(m, c)


def sk_log_likelihood(spins: np.ndarray, params: SKParams) -> float:
    """Total log-likelihood ``N (h.m + sum_{i<j} J_ij c_ij - log Z)``."""
    spins = np.atleast_2d(np.asarray(spins))
    if spins.shape[1] != params.n:
        raise InvalidInputError("spin dimension does not match parameters")
    if params.n > MAX_SPINS:
        raise BudgetExceededError("state space too large")
    mom = moments_from_spins(spins)
    return _loglik_from_moments(params.to_vector(), mom.to_vector(), params.n, spins.shape[0])


def _loglik_from_moments(theta: np.ndarray, mu: np.ndarray, n: int, N: int) -> float:
    logZ, _, _ = _logz_grad_hess(theta, n, need_hess=False)
    return float(N * (theta @ mu - logZ))


def _feature_chunks(n: int):
    if n <= 14:
        yield _feature_cache(n)
        return
    states = all_spin_states(n)
    for start in range(0, states.shape[0], _CHUNK):
        yield _features(states[start : start + _CHUNK])


def _logz_grad_hess(theta: np.ndarray, n: int, need_hess: bool = True):
    e = np.concatenate([T @ theta for T in _feature_chunks(n)])
    logZ = logsumexp(e)
    p = np.exp(e - logZ)
    d = theta.size
    mean = np.zeros(d)
    cov = np.zeros((d, d)) if need_hess else None
    start = 0
    for T in _feature_chunks(n):
        pc = p[start : start + T.shape[0]]
        start += T.shape[0]
        mean += pc @ T
        if need_hess:
            cov += T.T @ (T * pc[:, None])
    if need_hess:
        cov -= np.outer(mean, mean)
    return float(logZ), mean, cov


@lru_cache(maxsize=8)
def _feature_cache(n: int) -> np.ndarray:
    T = _features(all_spin_states(n))
    T.setflags(write=False)
    return T


def _backtrack(objective, theta, step, f):
    t = 1.0
    while t > 1e-10:
        cand = theta + t * step
        f_cand = objective(cand)
        if np.isfinite(f_cand) and f_cand >= f - 1e-15 * abs(f):
            return cand, f_cand
        t *= 0.5
    return None


def sk_fit(
    moments: SKMoments,
    init: SKParams | None = None,
    tol: float = 1e-11,
    max_iter: int = 500,
) -> SKParams:
    """Solve the self-consistency equations ``<s_i> = m_i``, ``<s_i s_j> = c_ij``.

    Damped Newton ascent on the concave log-likelihood: the step length is
    capped, then halved until the objective does not decrease, with a
    gradient step as fallback.
    """
    n = moments.n
    if n > MAX_SPINS:
        raise BudgetExceededError("state space too large")
    iu = np.triu_indices(n, 1)
    if np.any(np.abs(moments.m) >= 1.0) or np.any(np.abs(moments.c[iu]) >= 1.0):
        raise FitError("divergent parameters at boundary")
    mu = moments.to_vector()
    theta = np.zeros_like(mu) if init is None else init.to_vector().copy()

    def objective(th):
        logZ, mean, _ = _logz_grad_hess(th, n, need_hess=False)
        return th @ mu - logZ

    f = objective(theta)
    for _ in range(max_iter):
        logZ, mean, cov = _logz_grad_hess(theta, n)
        grad = mu - mean
        if np.max(np.abs(grad)) < tol:
            return SKParams.from_vector(theta, n)
        try:
            step = np.linalg.solve(cov + 1e-12 * np.eye(cov.shape[0]), grad)
        except np.linalg.LinAlgError:
            step = grad
        norm = np.linalg.norm(step)
        if not np.isfinite(norm):
            step, norm = grad, np.linalg.norm(grad)
        if norm > MAX_STEP:
            step = step * (MAX_STEP / norm)
        found = _backtrack(objective, theta, step, f)
        if found is None:
            # far from the optimum the Hessian can be nearly singular
            found = _backtrack(objective, theta, grad, f)
        if found is None:
            raise FitError("moment matching failed to converge")
        cand, f_cand = found
        theta, f = cand, f_cand
        if not np.all(np.isfinite(theta)) or np.max(np.abs(theta)) > 50:
            raise FitError("moment matching failed to converge")
    raise FitError("moment matching failed to converge")


def sk_max_log_likelihood(spins: np.ndarray, init: SKParams | None = None) -> tuple[float, SKParams]:
    """Fit the sample and return ``(maximized log-likelihood, fitted params)``."""
    spins = np.atleast_2d(np.asarray(spins))
    mom = moments_from_spins(spins)
    params = sk_fit(mom, init=init)
    ll = _loglik_from_moments(params.to_vector(), mom.to_vector(), params.n, spins.shape[0])
    return ll, params
