"""Metropolis sampling of NML codes over the space of samples.

A proposal flips one randomly chosen spin in each of ``r`` distinct
observations. The model is refitted on the proposed sample and the move is
accepted with probability ``min(1, exp(dlogL + beta * N * dH))`` where
``dlogL`` is the difference of *total* maximized log-likelihoods and ``dH``
the change in resolution. The stationary law is therefore proportional to
``f(s|theta_hat(s)) * exp(beta * N * H[s])``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Protocol

import numpy as np

from .core import spin_codes, xlogx
from .errors import FitError, InvalidInputError, NumericalError
from .models.rbm import CDConfig, random_init, rbm_fit_cd, rbm_fit_exact, rbm_log_likelihood, visible_from_spins
from .models.sk import sk_max_log_likelihood

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChainConfig:
    r: int = 1
    burn_in: int = 1000
    thin: int = 10
    steps: int = 10_000
    beta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.r < 1:
            raise InvalidInputError("r must be >= 1")
        if self.thin < 1:
            raise InvalidInputError("thin must be >= 1")
        if not self.steps > self.burn_in >= 0:
            raise InvalidInputError("steps must exceed burn_in")


@dataclass(frozen=True)
class ChainRecord:
    step: int
    resolution: float
    relevance: float
    kmax_frac: float
    loglik: float
    acc_rate: float


@dataclass
class ChainResult:
    records: list[ChainRecord]
    samples: list[np.ndarray]
    acceptance_rate: float
    fit_failures: int
    final: np.ndarray = field(repr=False, default=None)

    def resolutions(self) -> np.ndarray:
        return np.array([r.resolution for r in self.records])

    def relevances(self) -> np.ndarray:
        return np.array([r.relevance for r in self.records])


# --- model handles ----------------------------------------------------------


class ChainModel(Protocol):
    """Anything that can refit a spin sample and report its maximized log-likelihood."""

    n: int

    def fit(self, spins: np.ndarray, warm: Any = None, seed: int = 0) -> tuple[float, Any]: ...


class ParamagnetModel:
    """Independent spins; the fit is closed form and updated incrementally."""

    def __init__(self, n: int):
        self.n = n

    @staticmethod
    def _loglik(up, N: int) -> float:
        return sum(_g(u) + _g(N - u) for u in up) - len(up) * _g(N)

    def fit(self, spins, warm=None, seed=0):
        N = spins.shape[0]
        up = (spins > 0).sum(axis=0).tolist()
        return self._loglik(up, N), up

    def refit(self, spins, warm, flipped):
        """Update the up-counts after the spins at ``flipped`` (row, col) pairs changed sign."""
        up = list(warm)
        for row, col in flipped:
            up[col] += 1 if spins[row, col] > 0 else -1
        return self._loglik(up, spins.shape[0]), up


class UniformModel:
    """Degenerate model that ignores the data: every sample has the same likelihood."""

    def __init__(self, n: int):
        self.n = n

    def fit(self, spins, warm=None, seed=0):
        return -spins.shape[0] * self.n * math.log(2.0), None

    def refit(self, spins, warm, flipped):
        return self.fit(spins)


class SKModel:
    def __init__(self, n: int):
        self.n = n

    def fit(self, spins, warm=None, seed=0):
        return sk_max_log_likelihood(spins, init=warm)


class RBMModel:
    """RBM refitted by contrastive divergence, warm-started from the previous fit.

    With warm starts the refit is approximate, so the chain is only
    approximately stationary for the NML. ``fit_method="exact"`` swaps CD for
    deterministic gradient ascent with the enumerated gradient.
    """

    def __init__(self, n: int, n_hidden: int, cd_config=None, initial_config=None, fit_method: str = "cd"):
        self.n = n
        self.n_hidden = n_hidden
        self.cd_config = cd_config or CDConfig(kappa=1, epsilon=0.05, epochs=50, minibatches=10)
        self.initial_config = initial_config or CDConfig(kappa=1, epsilon=0.05, epochs=500, minibatches=10)
        if fit_method not in ("cd", "exact"):
            raise InvalidInputError("fit_method must be 'cd' or 'exact'")
        self.fit_method = fit_method

    def fit(self, spins, warm=None, seed=0):
        v = visible_from_spins(spins)
        init = warm if warm is not None else random_init(self.n, self.n_hidden, seed=seed)
        try:
            if self.fit_method == "exact":
                params = rbm_fit_exact(v, init, iterations=50 if warm is not None else 500)
            else:
                cfg = self.cd_config if warm is not None else self.initial_config
                params = rbm_fit_cd(v, init=init, config=replace(cfg, seed=seed))
        except (NumericalError, InvalidInputError) as exc:
            raise FitError(str(exc)) from exc
        return rbm_log_likelihood(v, params), params


# --- chain -------------------------------------------------------------------


def acceptance_probability(delta_loglik: float, delta_resolution: float, beta: float, N: int) -> float:
    """``min(1, exp(delta_loglik + beta * N * delta_resolution))``."""
    x = delta_loglik + beta * N * delta_resolution
    return 1.0 if x >= 0 else math.exp(x)


class _Occupancy:
    """Incrementally maintained state counts, degeneracies and ``sum k log k``."""

    def __init__(self, codes: np.ndarray):
        self.N = codes.size
        vals, k = np.unique(codes, return_counts=True)
        self.counts = dict(zip(vals.tolist(), k.tolist()))
        self.degeneracy: dict[int, int] = {}
        for kk in k.tolist():
            self.degeneracy[kk] = self.degeneracy.get(kk, 0) + 1
        self.sum_klogk = float(xlogx(k).sum())

    def _shift(self, k_old: int, k_new: int) -> None:
        m = self.degeneracy
        if k_old:
            if m[k_old] == 1:
                del m[k_old]
            else:
                m[k_old] -= 1
        if k_new:
            m[k_new] = m.get(k_new, 0) + 1

    def move(self, old: int, new: int) -> None:
        c = self.counts
        ko = c[old]
        self.sum_klogk -= _g(ko) - _g(ko - 1)
        self._shift(ko, ko - 1)
        if ko == 1:
            del c[old]
        else:
            c[old] = ko - 1
        kn = c.get(new, 0)
        self.sum_klogk += _g(kn + 1) - _g(kn)
        self._shift(kn, kn + 1)
        c[new] = kn + 1

    @property
    def resolution(self) -> float:
        return math.log(self.N) - self.sum_klogk / self.N

    @property
    def relevance(self) -> float:
        N = self.N
        return -sum(_g(k * m / N) for k, m in self.degeneracy.items())

    @property
    def kmax(self) -> int:
        return max(self.degeneracy)

    def k_values(self) -> np.ndarray:
        return np.fromiter(self.counts.values(), dtype=np.int64)


def _g(k: float) -> float:
    return k * math.log(k) if k > 0 else 0.0


_DRAW_CHUNK = 4096


def run_chain(
    model: ChainModel,
    N: int,
    config: ChainConfig,
    init: np.ndarray | None = None,
    keep_samples: bool = True,
    on_record: Callable[[int, np.ndarray], None] | None = None,
) -> ChainResult:
    """Sample the (tilted) NML of ``model`` over spin samples of size N.

    ``on_record(step, spins)`` is called at every record with the live
    (not copied) spin array.

    Models exposing ``refit(spins, warm, flipped)`` are updated incrementally;
    otherwise ``fit`` is called on the full proposed sample.
    """
    n = model.n
    r = config.r
    if r > N:
        raise InvalidInputError("r cannot exceed N")
    rng = np.random.default_rng(config.seed)
    if init is None:
        spins = rng.choice(np.array([-1, 1], dtype=np.int8), size=(N, n))
    else:
        spins = np.array(init, dtype=np.int8).reshape(N, n)
    codes = spin_codes(spins).tolist()
    occ = _Occupancy(np.asarray(codes))
    ll, theta = model.fit(spins, None, int(rng.integers(2**32)))
    refit = getattr(model, "refit", None)
    H = occ.resolution
    beta = config.beta
    records: list[ChainRecord] = []
    samples: list[np.ndarray] = []
    accepted = failures = 0

    for start in range(1, config.steps + 1, _DRAW_CHUNK):
        stop = min(start + _DRAW_CHUNK, config.steps + 1)
        m = stop - start
        if r == 1:
            rows_all = rng.integers(0, N, size=(m, 1)).tolist()
        else:
            rows_all = [rng.choice(N, r, replace=False).tolist() for _ in range(m)]
        cols_all = rng.integers(0, n, size=(m, r)).tolist()
        u_all = rng.random(m).tolist()
        seeds = rng.integers(0, 2**32, size=m).tolist()

        for t in range(m):
            step = start + t
            rows, cols = rows_all[t], cols_all[t]
            for row, col in zip(rows, cols):
                spins[row, col] = -spins[row, col]
                new = codes[row] ^ (1 << col)
                occ.move(codes[row], new)
                codes[row] = new
            try:
                if refit is not None:
                    ll_new, theta_new = refit(spins, theta, list(zip(rows, cols)))
                else:
                    ll_new, theta_new = model.fit(spins, theta, seeds[t])
            except FitError as exc:
                failures += 1
                log.debug("refit failed at step %d: %s", step, exc)
                ok = False
            else:
                H_new = occ.resolution
                ok = u_all[t] < acceptance_probability(ll_new - ll, H_new - H, beta, N)
            if ok:
                accepted += 1
                ll, theta, H = ll_new, theta_new, H_new
            else:
                for row, col in zip(reversed(rows), reversed(cols)):
                    spins[row, col] = -spins[row, col]
                    occ.move(codes[row], codes[row] ^ (1 << col))
                    codes[row] ^= 1 << col
            if failures and step >= 100 and failures > 0.1 * step:
                raise NumericalError("unstable refit")

            if step > config.burn_in and (step - config.burn_in) % config.thin == 0:
                records.append(ChainRecord(step, H, occ.relevance, occ.kmax / N, ll, accepted / step))
                if keep_samples:
                    samples.append(spins.copy())
                if on_record is not None:
                    on_record(step, spins)
    if failures:
        log.info("%d refits failed in %d steps", failures, config.steps)
    return ChainResult(records, samples, accepted / config.steps, failures, spins.copy())


def exact_transition_matrix(model: ChainModel, N: int, r: int = 1, beta: float = 0.0):
    """Transition matrix of :func:`run_chain` on a tiny instance, by enumeration.

    Returns ``(states, log_target, T)`` where ``states`` has shape
    ``(2^(nN), N, n)``, ``log_target`` is the unnormalized log stationary
    weight and ``T[x, y]`` the one-step transition probability.
    """
    n = model.n
    if n * N > 16:
        raise InvalidInputError("instance too large for an exact transition matrix")
    M = 2 ** (n * N)
    idx = np.arange(M)[:, None]
    states = np.where((idx >> np.arange(n * N)) & 1, 1, -1).astype(np.int8).reshape(M, N, n)
    ll = np.empty(M)
    H = np.empty(M)
    for x in range(M):
        ll[x] = model.fit(states[x])[0]
        occ = _Occupancy(spin_codes(states[x]))
        H[x] = occ.resolution
    log_target = ll + beta * N * H

    proposals = [
        (rows, cols)
        for rows in itertools.combinations(range(N), r)
        for cols in itertools.product(range(n), repeat=r)
    ]
    p_prop = 1.0 / len(proposals)
    # flat index of the spin at (row, col) in the bit layout above
    T = np.zeros((M, M))
    for x in range(M):
        for rows, cols in proposals:
            y = x
            for row, col in zip(rows, cols):
                y ^= 1 << (row * n + col)
            T[x, y] += p_prop * acceptance_probability(ll[y] - ll[x], H[y] - H[x], beta, N)
        T[x, x] += 1.0 - T[x].sum()
    return states, log_target, T


@dataclass(frozen=True)
class TuneResult:
    r: int
    acceptance: float
    warning: bool
    tried: dict


def tune_r(
    model: ChainModel,
    N: int,
    target_acceptance: float = 0.3,
    r0: int = 1,
    pilot_steps: int = 200,
    seed: int = 0,
    init: np.ndarray | None = None,
) -> TuneResult:
    """Double or halve ``r`` over pilot chains until the acceptance rate brackets the target.

    Returns the tested ``r`` whose acceptance is nearest the target (ties go
    to the first tested value). If even ``r = 1`` is accepted less often than
    the target, returns ``r = 1`` with ``warning=True``.
    """
    if not 0 < target_acceptance < 1:
        raise InvalidInputError("target acceptance must be in (0, 1)")
    rng = np.random.default_rng(seed)
    if init is None:
        init = rng.choice(np.array([-1, 1], dtype=np.int8), size=(N, model.n))
    tried: dict[int, float] = {}

    def pilot(r):
        cfg = ChainConfig(r=r, burn_in=0, thin=pilot_steps, steps=pilot_steps, seed=seed)
        tried[r] = run_chain(model, N, cfg, init=init, keep_samples=False).acceptance_rate
        return tried[r]

    r = max(1, min(r0, N))
    acc = pilot(r)
    if acc >= target_acceptance:
        while acc >= target_acceptance and r < N:
            r = min(2 * r, N)
            acc = pilot(r)
    else:
        while acc < target_acceptance and r > 1:
            r = max(r // 2, 1)
            acc = pilot(r)
        if acc < target_acceptance and r == 1:
            return TuneResult(1, acc, True, tried)
    best = min(tried, key=lambda q: (abs(tried[q] - target_acceptance), list(tried).index(q)))
    return TuneResult(best, tried[best], False, tried)
