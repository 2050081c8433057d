import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nmlcodes.dirichlet import exact_profile_table
from nmlcodes.spin import (
    ParamagnetSpec,
    arcsine_cdf,
    magnetization_grid,
    ml_field,
    paramagnet_complexity,
    sample_paramagnet_nml,
    sample_up_counts,
    single_spin_log_likelihood,
    single_spin_nml_pmf,
)


def brute_force_pmf(N: int) -> np.ndarray:
    """Enumerate all 2^N single-spin samples and bin their maximized likelihoods by up-count."""
    w = np.zeros(N + 1)
    for seq in itertools.product((0, 1), repeat=N):
        ell = sum(seq)
        p = ell / N
        w[ell] += (p**ell) * ((1 - p) ** (N - ell))
    return w


def test_pmf_at_N2():
    assert single_spin_nml_pmf(2) == pytest.approx([0.4, 0.2, 0.4], abs=1e-14)
    assert brute_force_pmf(2).sum() == pytest.approx(2.5)


@pytest.mark.parametrize("N", [1, 3, 6, 9])
def test_pmf_matches_brute_force(N):
    w = brute_force_pmf(N)
    assert single_spin_nml_pmf(N) == pytest.approx(w / w.sum(), abs=1e-13)
    assert paramagnet_complexity(ParamagnetSpec(1, N)) == pytest.approx(math.log(w.sum()), abs=1e-12)


@given(st.integers(1, 3000))
def test_pmf_symmetric_and_normalized(N):
    p = single_spin_nml_pmf(N)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.allclose(p, p[::-1], atol=1e-15)


@pytest.mark.parametrize("N", [2, 17, 40])
def test_equivalent_to_two_state_dirichlet(N):
    prof, logp = exact_profile_table(2, N)
    # profiles enumerate k1 from 0..N
    order = np.argsort(prof[:, 0])
    assert np.abs(np.exp(logp[order]) - single_spin_nml_pmf(N)).max() < 1e-12


def test_complexity_product_form():
    assert paramagnet_complexity(ParamagnetSpec(1, 2)) == pytest.approx(math.log(2.5), abs=1e-12)
    assert paramagnet_complexity(ParamagnetSpec(2, 2)) == pytest.approx(2 * math.log(2.5), abs=1e-12)
    assert paramagnet_complexity(ParamagnetSpec(3, 10), "asymptotic") == pytest.approx(1.5 * math.log(5 * math.pi))


def test_complexity_next_order_correction():
    # exact - asymptotic tends to log(1 + (2/3) / sqrt(pi N / 2)), so it shrinks like N^-1/2
    for N in (100, 1000, 10**4):
        gap = paramagnet_complexity(ParamagnetSpec(1, N)) - paramagnet_complexity(ParamagnetSpec(1, N), "asymptotic")
        assert gap == pytest.approx(math.log1p(2 / 3 / math.sqrt(math.pi * N / 2)), rel=0.02)


def test_exact_pmf_follows_arcsine_law():
    N = 10**4
    p = single_spin_nml_pmf(N)
    m = magnetization_grid(N)
    edges = np.linspace(-0.99, 0.99, 51)
    mass = np.array([p[(m >= a) & (m < b)].sum() for a, b in zip(edges, edges[1:])])
    expected = np.diff(arcsine_cdf(edges))
    assert np.max(np.abs(mass / expected - 1)) < 0.03


def test_ml_field_maximizes_likelihood():
    for m in np.round(np.arange(-0.9, 0.91, 0.1), 10):
        h = ml_field(m)
        ll = single_spin_log_likelihood(m, h)
        assert ll > single_spin_log_likelihood(m, h + 0.01)
        assert ll > single_spin_log_likelihood(m, h - 0.01)


def test_sampled_two_spin_sequences():
    counts = {}
    rng_seeds = range(20000)
    for s in rng_seeds:
        x = sample_paramagnet_nml(ParamagnetSpec(1, 2), seed=s).spins[:, 0]
        key = "".join("+" if v > 0 else "-" for v in x)
        counts[key] = counts.get(key, 0) + 1
    n = len(rng_seeds)
    for key, p in {"++": 0.4, "+-": 0.1, "-+": 0.1, "--": 0.4}.items():
        assert counts[key] / n == pytest.approx(p, abs=4 * math.sqrt(p * (1 - p) / n))


def test_sampled_columns_independent():
    draws = 10**4
    mags = np.array([sample_paramagnet_nml(ParamagnetSpec(2, 1000), seed=s).spins.mean(axis=0) for s in range(draws)])
    # sampling error of a null correlation is 1/sqrt(draws)
    assert abs(np.corrcoef(mags.T)[0, 1]) < 4 / math.sqrt(draws)


def test_sample_marginal_is_exact_pmf():
    N = 20
    rng = np.random.default_rng(5)
    draws = sample_up_counts(N, 10**5, rng)
    freq = np.bincount(draws, minlength=N + 1) / draws.size
    assert 0.5 * np.abs(freq - single_spin_nml_pmf(N)).sum() < 0.01


def test_sample_reproducible_and_shaped():
    a = sample_paramagnet_nml(ParamagnetSpec(5, 100), seed=3)
    b = sample_paramagnet_nml(ParamagnetSpec(5, 100), seed=3)
    assert a.spins.shape == (100, 5)
    assert np.array_equal(a.spins, b.spins)
