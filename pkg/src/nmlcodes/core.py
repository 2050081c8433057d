"""Samples, frequency profiles and the resolution/relevance statistics.

Entropies are in nats. Divide by ``log N`` for the base-free normalized
values, or use :func:`to_bits` for coding costs in bits.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

LN2 = float(np.log(2.0))

# Exponent of the Zipf point on the MIS curve.
ZIPF_MU = 1.0


def to_bits(nats):
    """Convert a quantity in nats to bits."""
    return nats / LN2


def xlogx(x):
    """Elementwise ``x log x`` with the convention ``0 log 0 = 0``."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, x * np.log(safe), 0.0)


@dataclass(frozen=True)
class Sample:
    """An ordered sample of N discrete outcomes.

    ``outcomes`` are opaque hashable labels. ``states`` optionally declares the
    size of the state space; when given, the number of distinct labels may not
    exceed it.
    """

    outcomes: tuple
    states: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        if not self.outcomes:
            raise InvalidInputError("empty sample")
        if self.states is not None:
            if self.states < 1:
                raise InvalidInputError("state space must be non-empty")
            if len(set(self.outcomes)) > self.states:
                raise InvalidInputError(
                    f"{len(set(self.outcomes))} distinct outcomes exceed declared states={self.states}"
                )

    @property
    def N(self) -> int:
        return len(self.outcomes)


def spin_labels(spins: np.ndarray) -> list[str]:
    """Canonical string label for each row of a spin array: ``'+'`` for up, ``'-'`` otherwise."""
    spins = np.atleast_2d(np.asarray(spins))
    table = np.where(spins > 0, "+", "-")
    return ["".join(row) for row in table]


def spin_codes(spins: np.ndarray) -> np.ndarray:
    """Integer code of each row, bit ``j`` set when spin ``j`` is up."""
    spins = np.atleast_2d(np.asarray(spins))
    n = spins.shape[1]
    if n > 62:
        raise InvalidInputError("at most 62 spins per observation")
    weights = np.left_shift(np.int64(1), np.arange(n, dtype=np.int64))
    return (spins > 0).astype(np.int64) @ weights


@dataclass(frozen=True, eq=False)
class SpinSample:
    """N observations of n binary variables, stored as an ``(N, n)`` array of +-1."""

    spins: np.ndarray

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.spins))
        if arr.size == 0:
            raise InvalidInputError("empty sample")
        if not np.all((arr == 1) | (arr == -1) | (arr == 0)):
            raise InvalidInputError("spin entries must be +-1 or 0/1")
        # 0/1 input is mapped onto -1/+1
        arr = np.where(arr > 0, 1, -1).astype(np.int8)
        arr.setflags(write=False)
        object.__setattr__(self, "spins", arr)

    @property
    def N(self) -> int:
        return self.spins.shape[0]

    @property
    def n(self) -> int:
        return self.spins.shape[1]

    def codes(self) -> np.ndarray:
        return spin_codes(self.spins)

    def to_sample(self) -> Sample:
        return Sample(tuple(spin_labels(self.spins)), states=2**self.n)


@dataclass(frozen=True)
class FrequencyProfile:
    """State counts ``k_s`` and the degeneracy map ``k -> m_k``.

    ``counts`` may contain zero entries (declared but unobserved states); the
    degeneracy map only lists occupied frequencies ``k >= 1``, sorted.
    """

    counts: Mapping[Hashable, int]
    N: int = field(init=False)
    degeneracy: Mapping[int, int] = field(init=False)

    def __post_init__(self):
        counts = dict(self.counts)
        if any(int(k) != k or k < 0 for k in counts.values()):
            raise InvalidInputError("counts must be non-negative integers")
        counts = {s: int(k) for s, k in counts.items()}
        N = sum(counts.values())
        if N < 1:
            raise InvalidInputError("empty sample")
        deg = Counter(k for k in counts.values() if k > 0)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "degeneracy", dict(sorted(deg.items())))

    @classmethod
    def from_counts(cls, counts) -> FrequencyProfile:
        """Build from a mapping, or from an array indexed by state number."""
        if isinstance(counts, Mapping):
            return cls(counts)
        arr = np.asarray(counts)
        return cls({i: int(k) for i, k in enumerate(arr)})

    def k_values(self) -> np.ndarray:
        """Occupied counts as an integer array (zeros dropped)."""
        k = np.fromiter(self.counts.values(), dtype=np.int64, count=len(self.counts))
        return k[k > 0]

    def rank_table(self) -> list[tuple[int, int]]:
        """(rank, count) pairs sorted by decreasing count, ranks from 1."""
        ks = sorted(self.k_values().tolist(), reverse=True)
        return list(enumerate(ks, start=1))

    @property
    def kmax(self) -> int:
        return max(self.counts.values())


def frequency_profile(sample) -> FrequencyProfile:
    """Count the outcomes of a :class:`Sample`, :class:`SpinSample` or plain sequence."""
    if isinstance(sample, SpinSample):
        codes, k = np.unique(sample.codes(), return_counts=True)
        return FrequencyProfile(dict(zip(codes.tolist(), k.tolist())))
    outcomes = sample.outcomes if isinstance(sample, Sample) else list(sample)
    if len(outcomes) == 0:
        raise InvalidInputError("empty sample")
    return FrequencyProfile(Counter(outcomes))


def _as_counts(profile) -> np.ndarray:
    if isinstance(profile, FrequencyProfile):
        return profile.k_values()
    k = np.asarray(profile, dtype=np.int64).ravel()
    return k[k > 0]


def resolution_from_counts(k) -> float:
    k = _as_counts(k)
    N = k.sum()
    return float(np.log(N) - xlogx(k).sum() / N)


def relevance_from_counts(k) -> float:
    k = _as_counts(k)
    N = k.sum()
    ks, mk = np.unique(k, return_counts=True)
    mass = ks * mk
    return float(np.log(N) - xlogx(mass).sum() / N)


def resolution(profile) -> float:
    """Plug-in entropy of the empirical state frequencies, in nats."""
    return resolution_from_counts(profile)


def resolution_by_degeneracy(profile: FrequencyProfile) -> float:
    """Same quantity as :func:`resolution`, summed over frequencies ``k`` instead of states."""
    N = profile.N
    return float(-sum(k * m / N * np.log(k / N) for k, m in profile.degeneracy.items()))


def relevance(profile) -> float:
    """Entropy of the distribution ``k m_k / N`` over occupied frequencies, in nats."""
    return relevance_from_counts(profile)


@dataclass(frozen=True)
class ResolutionRelevance:
    resolution: float
    relevance: float
    N: int

    @property
    def resolution_norm(self) -> float:
        return self.resolution / np.log(self.N) if self.N > 1 else 0.0

    @property
    def relevance_norm(self) -> float:
        return self.relevance / np.log(self.N) if self.N > 1 else 0.0


def resolution_relevance(profile) -> ResolutionRelevance:
    k = _as_counts(profile)
    return ResolutionRelevance(resolution_from_counts(k), relevance_from_counts(k), int(k.sum()))


def kmax_fraction(profile) -> float:
    k = _as_counts(profile)
    return float(k.max() / k.sum())


# --- maximally informative samples ---------------------------------------


@dataclass(frozen=True)
class MISPoint:
    mu: float
    resolution: float
    relevance: float
    zipf: bool


def mis_point(N: int, mu: float) -> MISPoint:
    """Resolution and relevance of the relaxed power law ``m_k = c k^(-1-mu)`` on ``k = 1..N``."""
    if not mu > 0:
        raise InvalidInputError("invalid exponent")
    k = np.arange(1, N + 1, dtype=float)
    # work with log m_k to keep k^(-1-mu) finite for large mu
    log_mass = -mu * np.log(k)
    log_mass -= np.logaddexp.reduce(log_mass)
    p = np.exp(log_mass)  # p_k = k m_k / N
    hs = float(-(p * np.log(k / N)).sum())
    hk = float(-(p * log_mass).sum())
    return MISPoint(float(mu), hs, hk, bool(np.isclose(mu, ZIPF_MU)))


def mis_bound_curve(N: int, mu_grid: Iterable[float]) -> list[MISPoint]:
    """Points of the power-law MIS curve in the (resolution, relevance) plane.

    Larger ``mu`` concentrates the mass on small ``k`` (many rarely seen states)
    and therefore gives *higher* resolution. The local slope
    ``d relevance / d resolution`` equals ``-mu``.
    """
    if N < 2:
        raise InvalidInputError("N must be at least 2")
    return [mis_point(N, float(mu)) for mu in mu_grid]


def default_mu_grid() -> np.ndarray:
    return np.concatenate([np.geomspace(0.01, 0.5, 60, endpoint=False), np.geomspace(0.5, 60.0, 240)])


def mis_relevance_at(N: int, resolution_value, mu_grid=None):
    """Relevance of the MIS curve interpolated at the given resolution(s), in nats."""
    pts = mis_bound_curve(N, default_mu_grid() if mu_grid is None else mu_grid)
    hs = np.array([p.resolution for p in pts])
    hk = np.array([p.relevance for p in pts])
    order = np.argsort(hs)
    return np.interp(resolution_value, hs[order], hk[order])


# --- random balls-in-boxes baseline -------------------------------------


def _baseline_rep(N: int, L: int, rng: np.random.Generator) -> tuple[float, float]:
    boxes = rng.integers(0, L, size=N)
    _, k = np.unique(boxes, return_counts=True)
    return resolution_from_counts(k), relevance_from_counts(k)


def random_baseline(N: int, L: int, reps: int, seed: int) -> tuple[float, float]:
    """Mean (resolution, relevance) of N balls thrown uniformly into L boxes."""
    if N < 1 or L < 1 or reps < 1:
        raise InvalidInputError("N, L and reps must be positive")
    streams = np.random.SeedSequence(seed).spawn(reps)
    vals = np.array([_baseline_rep(N, L, np.random.default_rng(s)) for s in streams])
    hs, hk = vals.mean(axis=0)
    return float(hs), float(hk)


@dataclass(frozen=True)
class BaselinePoint:
    L: int
    resolution: float
    relevance: float


def random_baseline_curve(N: int, L_grid: Iterable[int], reps: int, seed: int) -> list[BaselinePoint]:
    out = []
    for i, L in enumerate(L_grid):
        hs, hk = random_baseline(N, int(L), reps, seed + i)
        out.append(BaselinePoint(int(L), hs, hk))
    return out


def default_L_grid(max_L: int = 10**7, points: int = 60) -> np.ndarray:
    return np.unique(np.geomspace(2, max_L, points).astype(np.int64))


def baseline_relevance_at(curve: Sequence[BaselinePoint], resolution_value):
    hs = np.array([p.resolution for p in curve])
    hk = np.array([p.relevance for p in curve])
    order = np.argsort(hs)
    return np.interp(resolution_value, hs[order], hk[order])
