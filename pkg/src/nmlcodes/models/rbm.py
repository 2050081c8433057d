"""Restricted Boltzmann machine with binary visible units.

Visible units take values in {0, 1}. Hidden units follow ``unit_convention``:
``"hidden01"`` (h in {0,1}, marginal term ``softplus(b_j + v.w_j)``) or
``"hiddenpm1"`` (h in {-1,+1}, marginal term ``log 2cosh(b_j + v.w_j)``).
The two are related by ``b01 = 2 b``, ``w01 = 2 w``, ``a01 = a - sum_j w_ij``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.special import expit, logsumexp

from ..errors import BudgetExceededError, InvalidInputError, NumericalError

log = logging.getLogger(__name__)

MAX_VISIBLE = 20
CONVENTIONS = ("hidden01", "hiddenpm1")


@dataclass(frozen=True, eq=False)
class RBMParams:
    a: np.ndarray
    b: np.ndarray
    w: np.ndarray
    unit_convention: str = "hidden01"

    def __post_init__(self):
        a = np.array(self.a, dtype=float).ravel()
        b = np.array(self.b, dtype=float).ravel()
        w = np.array(self.w, dtype=float).reshape(a.size, b.size)
        if self.unit_convention not in CONVENTIONS:
            raise InvalidInputError(f"unit_convention must be one of {CONVENTIONS}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(w))):
            raise InvalidInputError("RBM parameters must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "w", w)

    @property
    def n_visible(self) -> int:
        return self.a.size

    @property
    def n_hidden(self) -> int:
        return self.b.size


@dataclass(frozen=True)
class CDConfig:
    kappa: int = 10
    epsilon: float = 0.01
    epochs: int = 2500
    minibatches: int = 200
    persistent: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.kappa < 1:
            raise InvalidInputError("kappa must be >= 1")
        if not self.epsilon > 0:
            raise InvalidInputError("epsilon must be positive")
        if self.epochs < 0 or self.minibatches < 1:
            raise InvalidInputError("epochs >= 0 and minibatches >= 1 required")


def to_hidden01(params: RBMParams) -> RBMParams:
    if params.unit_convention == "hidden01":
        return params
    return RBMParams(params.a - params.w.sum(axis=1), 2 * params.b, 2 * params.w, "hidden01")


def to_hiddenpm1(params: RBMParams) -> RBMParams:
    if params.unit_convention == "hiddenpm1":
        return params
    w = params.w / 2
    return RBMParams(params.a + w.sum(axis=1), params.b / 2, w, "hiddenpm1")


def random_init(n_visible: int, n_hidden: int, seed: int = 0, scale: float = 0.01) -> RBMParams:
    rng = np.random.default_rng(seed)
    w = rng.uniform(-scale, scale, size=(n_visible, n_hidden))
    return RBMParams(np.zeros(n_visible), np.zeros(n_hidden), w)


@lru_cache(maxsize=8)
def all_visible_states(n: int) -> np.ndarray:
    if n > MAX_VISIBLE:
        raise BudgetExceededError("state space too large")
    idx = np.arange(2**n, dtype=np.int64)[:, None]
    v = ((idx >> np.arange(n)) & 1).astype(float)
    v.setflags(write=False)
    return v


def _hidden_term(x: np.ndarray, convention: str) -> np.ndarray:
    if convention == "hidden01":
        return np.logaddexp(0.0, x)
    # log 2cosh x, stable for large |x|
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2 * ax))


def log_unnormalized(v: np.ndarray, params: RBMParams) -> np.ndarray:
    """``a.v + sum_j term(b_j + v.w_j)`` for each row of v."""
    x = v @ params.w + params.b
    return v @ params.a + _hidden_term(x, params.unit_convention).sum(axis=1)


def rbm_log_partition(params: RBMParams) -> float:
    return float(logsumexp(log_unnormalized(all_visible_states(params.n_visible), params)))


def visible_from_spins(spins: np.ndarray) -> np.ndarray:
    """Map +-1 spins onto {0,1} visible units."""
    return (np.asarray(spins) > 0).astype(float)


def _check_visible(v) -> np.ndarray:
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if not np.all((v == 0) | (v == 1)):
        raise InvalidInputError("visible units must be 0/1")
    return v


def rbm_log_likelihood(v: np.ndarray, params: RBMParams) -> float:
    """Total log-likelihood of the visible sample, hidden units summed in closed form."""
    v = _check_visible(v)
    if v.shape[1] != params.n_visible:
        raise InvalidInputError("visible dimension does not match parameters")
    if params.n_visible > MAX_VISIBLE:
        raise BudgetExceededError("state space too large")
    return float(log_unnormalized(v, params).sum() - v.shape[0] * rbm_log_partition(params))


def rbm_exact_gradient(v: np.ndarray, params: RBMParams) -> RBMParams:
    """Gradient of the total log-likelihood, model averages by enumeration.

    Returned as an :class:`RBMParams` holding ``(d/da, d/db, d/dw)`` in the
    parameters' own convention.
    """
    v = _check_visible(v)
    N = v.shape[0]
    conv = params.unit_convention
    act = expit if conv == "hidden01" else np.tanh

    def stats(x_v, weights):
        hmean = act(x_v @ params.w + params.b)
        return weights @ x_v, weights @ hmean, x_v.T @ (hmean * weights[:, None])

    da, db, dw = stats(v, np.ones(N))
    states = all_visible_states(params.n_visible)
    lu = log_unnormalized(states, params)
    p = np.exp(lu - logsumexp(lu))
    ma, mb, mw = stats(states, p)
    return RBMParams(da - N * ma, db - N * mb, dw - N * mw, conv)


def _sample_hidden(v, p01: RBMParams, rng):
    prob = expit(v @ p01.w + p01.b)
    return (rng.random(prob.shape) < prob).astype(float), prob


def _sample_visible(h, p01: RBMParams, rng):
    prob = expit(h @ p01.w.T + p01.a)
    return (rng.random(prob.shape) < prob).astype(float)


def rbm_fit_cd(
    v: np.ndarray,
    init: RBMParams | None = None,
    config: CDConfig = CDConfig(),
    n_hidden: int | None = None,
    history: list | None = None,
) -> RBMParams:
    """Contrastive-divergence training (persistent when ``config.persistent``).

    Per mini-batch the chain runs ``v(0) -> h(0) -> ... -> v(kappa) -> h(kappa)``
    and parameters move by ``epsilon / batch_size`` times the CD gradient
    estimate. Hidden probabilities are used in the sufficient statistics.
    If ``history`` is a list the exact log-likelihood after each epoch is
    appended to it (requires a small visible layer).
    """
    v = _check_visible(v)
    N, nv = v.shape
    if init is None:
        if n_hidden is None:
            raise InvalidInputError("n_hidden is required without init")
        init = random_init(nv, n_hidden, seed=config.seed)
    convention = init.unit_convention
    p = to_hidden01(init)
    a, b, w = p.a.copy(), p.b.copy(), p.w.copy()
    rng = np.random.default_rng(config.seed)
    n_batches = min(config.minibatches, N)
    persistent_v = None
    if config.persistent:
        persistent_v = (rng.random((N, nv)) < 0.5).astype(float)

    for _ in range(config.epochs):
        perm = rng.permutation(N)
        for batch in np.array_split(perm, n_batches):
            v0 = v[batch]
            cur = RBMParams(a, b, w)
            h0_prob = expit(v0 @ w + b)
            vk = persistent_v[batch] if config.persistent else v0
            for _ in range(config.kappa):
                hk, _ = _sample_hidden(vk, cur, rng)
                vk = _sample_visible(hk, cur, rng)
            hk_prob = expit(vk @ w + b)
            if config.persistent:
                persistent_v[batch] = vk
            scale = config.epsilon / len(batch)
            w += scale * (v0.T @ h0_prob - vk.T @ hk_prob)
            a += scale * (v0.sum(0) - vk.sum(0))
            b += scale * (h0_prob.sum(0) - hk_prob.sum(0))
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise NumericalError("training diverged")
        if history is not None:
            history.append(rbm_log_likelihood(v, RBMParams(a, b, w)))

    out = RBMParams(a, b, w)
    return out if convention == "hidden01" else to_hiddenpm1(out)


def rbm_fit_exact(
    v: np.ndarray,
    init: RBMParams,
    epsilon: float = 0.05,
    iterations: int = 200,
) -> RBMParams:
    """Deterministic gradient ascent with the enumerated gradient (small visible layers only)."""
    v = _check_visible(v)
    N = v.shape[0]
    p = init
    for _ in range(iterations):
        g = rbm_exact_gradient(v, p)
        p = replace(p, a=p.a + epsilon * g.a / N, b=p.b + epsilon * g.b / N, w=p.w + epsilon * g.w / N)
    return p
