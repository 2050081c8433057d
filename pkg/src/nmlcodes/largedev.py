"""Large deviations of the resolution under an NML code.

``phi(beta) = (1/N) log sum_s P(s) exp(beta N H[s])`` is the scaled cumulant
generating function of the resolution. Its derivative ``E(beta)`` is the mean
resolution under the tilted law ``P_beta(s) ~ P(s) exp(beta N H[s])`` and
the rate function follows from the Legendre relation.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .core import xlogx
from .dirichlet import DirichletSpec, exact_profile_table, parametric_complexity, run_profile_chain
from .errors import BudgetExceededError, InvalidInputError
from .nml_mcmc import ChainConfig, ChainModel, run_chain
from .spin import ParamagnetSpec, single_spin_log_weights

EXACT_MAX_N = 40
EXACT_MAX_S = 4
DEFAULT_SEGMENTS = 10


@dataclass
class PhiCurve:
    beta: np.ndarray
    phi: np.ndarray
    E: np.ndarray
    I: np.ndarray
    kmax_frac: np.ndarray
    method: str
    phi_se: np.ndarray | None = None
    E_se: np.ndarray | None = None

    def rows(self):
        zeros = np.zeros_like(self.beta)
        phi_se = self.phi_se if self.phi_se is not None else zeros
        E_se = self.E_se if self.E_se is not None else zeros
        for row in zip(self.beta, self.phi, phi_se, self.E, E_se, self.I, self.kmax_frac):
            yield tuple(float(x) for x in row)


def default_beta_grid(points: int = 21) -> np.ndarray:
    return np.round(np.linspace(-1.0, 1.0, points), 12)


# --- exact enumeration --------------------------------------------------------


def exact_ensemble(spec, max_N: int = EXACT_MAX_N):
    """``(log P, H, kmax/N, N)`` over all distinct profiles, multiplicities folded into ``log P``."""
    if isinstance(spec, DirichletSpec):
        if spec.S > EXACT_MAX_S or spec.N > max_N:
            raise BudgetExceededError("enumeration budget exceeded")
        prof, logp = exact_profile_table(spec.S, spec.N)
        k = prof.astype(float)
        N = spec.N
    elif isinstance(spec, ParamagnetSpec):
        if spec.n != 1 or spec.N > max_N:
            raise BudgetExceededError("enumeration budget exceeded")
        N = spec.N
        lw = single_spin_log_weights(N)
        logp = lw - logsumexp(lw)
        ell = np.arange(N + 1, dtype=float)
        k = np.stack([ell, N - ell], axis=1)
    else:
        raise InvalidInputError("exact phi needs a Dirichlet or single-spin spec")
    H = math.log(N) - xlogx(k).sum(axis=1) / N
    return logp, H, k.max(axis=1) / N, N


def _tilted(logp, H, N, beta):
    # subtract the untilted sum so that phi(0) cancels exactly
    a = logp + beta * N * H
    lz = logsumexp(a)
    return (lz - logsumexp(logp)) / N, np.exp(a - lz)


def phi_complex_step(spec, beta: float, h: float = 1e-20) -> float:
    """``dphi/dbeta`` by complex-step differentiation of the enumerated sum."""
    logp, H, _, N = exact_ensemble(spec)
    a = logp + beta * N * H
    shift = a.max()
    z = np.sum(np.exp(a - shift + 1j * h * N * H))
    return float(np.log(z).imag / (h * N))


def phi_exact(spec, beta_grid) -> PhiCurve:
    """Exact ``phi``, ``E`` and rate function by enumeration over profiles."""
    beta = np.asarray(beta_grid, dtype=float)
    logp, H, kf, N = exact_ensemble(spec)
    phi = np.empty_like(beta)
    E = np.empty_like(beta)
    km = np.empty_like(beta)
    for i, b in enumerate(beta):
        phi[i], w = _tilted(logp, H, N, b)
        E[i] = w @ H
        km[i] = w @ kf
    return PhiCurve(beta, phi, E, beta * E - phi, km, "exact")


def localized_lower_bound(spec) -> float:
    """``(log S - R) / N``: only the S single-state samples contribute."""
    if isinstance(spec, DirichletSpec):
        S, N = spec.S, spec.N
        R = parametric_complexity(spec, method="exact")
    elif isinstance(spec, ParamagnetSpec):
        from .spin import paramagnet_complexity

        S, N = 2**spec.n, spec.N
        R = paramagnet_complexity(spec)
    else:
        raise InvalidInputError("unsupported spec")
    return (math.log(S) - R) / N


# --- rate function ------------------------------------------------------------


def rate_function(curve: PhiCurve, tol: float = 1e-12) -> list[tuple[float, float]]:
    """Pairs ``(E, I(E))`` with ``I = beta E - phi``, sorted by E.

    This is the Legendre transform of a convex ``phi``; it vanishes at
    ``beta = 0`` and is non-negative elsewhere.
    """
    beta = np.asarray(curve.beta, dtype=float)
    phi = np.asarray(curve.phi, dtype=float)
    if beta.size == 0 or np.any(np.diff(beta) <= 0) or np.any(np.diff(phi) < -tol):
        raise InvalidInputError("invalid phi curve")
    I = beta * curve.E - phi
    pairs = sorted(zip(np.asarray(curve.E, dtype=float).tolist(), I.tolist()))
    return pairs


# --- thermodynamic integration ------------------------------------------------


def batch_means(x: np.ndarray, segments: int = DEFAULT_SEGMENTS) -> tuple[float, float]:
    """Mean and batch-means standard error over ``segments`` contiguous blocks."""
    x = np.asarray(x, dtype=float)
    if x.size < segments:
        raise InvalidInputError("too few records for batch means")
    blocks = np.array([b.mean() for b in np.array_split(x, segments)])
    return float(x.mean()), float(blocks.std(ddof=1) / math.sqrt(segments))


def _point_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


def _tilted_trace(target, beta: float, chain: ChainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Recorded ``(H, kmax/N)`` of one tilted chain."""
    if isinstance(target, DirichletSpec):
        res = run_profile_chain(target, beta, chain)
        k = np.array(res.profiles, dtype=float)
        N = target.N
        H = math.log(N) - xlogx(k).sum(axis=1) / N
        return H, k.max(axis=1) / N
    model, N = target
    res = run_chain(model, N, replace(chain, beta=beta), keep_samples=False)
    return res.resolutions(), np.array([r.kmax_frac for r in res.records])


def _run_point(args):
    target, beta, chain, segments = args
    H, kf = _tilted_trace(target, beta, chain)
    E, se = batch_means(H, segments)
    return E, se, float(kf.mean())


def trapezoid_from_zero(beta: np.ndarray, E: np.ndarray, E_se: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Integrate E from the grid point at 0; returns ``(phi, phi_se)`` assuming independent points."""
    zero = np.flatnonzero(np.isclose(beta, 0.0, atol=1e-12))
    if zero.size != 1:
        raise InvalidInputError("beta grid must contain 0")
    z = int(zero[0])
    phi = np.zeros_like(beta)
    se = np.zeros_like(beta)
    for direction in (1, -1):
        w = np.zeros_like(beta)
        i = z
        while 0 <= i + direction < beta.size:
            j = i + direction
            half = 0.5 * (beta[j] - beta[i])
            w[i] += half
            w[j] += half
            phi[j] = w @ E
            se[j] = math.sqrt(np.sum((w * E_se) ** 2))
            i = j
    return phi, se


def phi_thermo_integration(
    target,
    beta_grid,
    chain: ChainConfig,
    segments: int = DEFAULT_SEGMENTS,
    workers: int = 1,
) -> PhiCurve:
    """``phi`` by integrating tilted-chain estimates of ``E(beta)`` from ``phi(0) = 0``.

    ``target`` is a :class:`DirichletSpec` (profile exchange chain) or a
    ``(model, N)`` pair for the spin-sample chain. Each grid point gets its own
    chain seeded from ``(chain.seed, index)``.
    """
    beta = np.asarray(beta_grid, dtype=float)
    if np.any(np.diff(beta) <= 0):
        raise InvalidInputError("beta grid must be increasing")
    jobs = [(target, float(b), replace(chain, seed=_point_seed(chain.seed, i)), segments) for i, b in enumerate(beta)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            out = list(ex.map(_run_point, jobs))
    else:
        out = [_run_point(j) for j in jobs]
    E = np.array([o[0] for o in out])
    E_se = np.array([o[1] for o in out])
    kf = np.array([o[2] for o in out])
    phi, phi_se = trapezoid_from_zero(beta, E, E_se)
    return PhiCurve(beta, phi, E, beta * E - phi, kf, "ti", phi_se, E_se)


# --- localization scan ----------------------------------------------------------


@dataclass(frozen=True)
class ScanRow:
    beta: float
    N: int
    Hs_norm: float
    kmax_frac: float
    Hs_norm_se: float
    kmax_frac_se: float


def _scan_point(args):
    spec, beta, chain, reps = args
    hs, km = [], []
    for r in range(reps):
        res = run_profile_chain(spec, beta, replace(chain, seed=_point_seed(chain.seed, r)))
        k = np.array(res.profiles, dtype=float)
        H = math.log(spec.N) - xlogx(k).sum(axis=1) / spec.N
        hs.append(H.mean() / math.log(spec.N))
        km.append((k.max(axis=1) / spec.N).mean())
    hs, km = np.array(hs), np.array(km)
    se = (lambda x: float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0)
    return ScanRow(beta, spec.N, float(hs.mean()), float(km.mean()), se(hs), se(km))


def localization_scan(
    rho: float,
    beta_grid,
    N_list,
    chain: ChainConfig,
    reps: int = 1,
    steps_per_ball: float | None = None,
    workers: int = 1,
) -> list[ScanRow]:
    """Normalized resolution and max-frequency fraction of tilted Dirichlet samples.

    For each ``N`` the number of states is ``round(N / rho)``. With
    ``steps_per_ball`` set, chain length and burn-in scale with ``N``
    (``steps = steps_per_ball * N``, half of it burn-in, 20 records).
    """
    rows = []
    jobs = []
    for N in N_list:
        spec = DirichletSpec(max(1, int(round(N / rho))), int(N))
        cfg = chain
        if steps_per_ball is not None:
            steps = int(steps_per_ball * N)
            cfg = replace(chain, steps=steps, burn_in=steps // 2, thin=max(1, steps // 40))
        for i, b in enumerate(np.asarray(beta_grid, dtype=float)):
            jobs.append((spec, float(b), replace(cfg, seed=_point_seed(chain.seed, 1000 * int(N) + i)), reps))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_scan_point, jobs))
    else:
        rows = [_scan_point(j) for j in jobs]
    return rows
