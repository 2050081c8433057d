import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmlcodes.core import (
    FrequencyProfile,
    Sample,
    SpinSample,
    baseline_relevance_at,
    frequency_profile,
    mis_bound_curve,
    mis_point,
    mis_relevance_at,
    random_baseline,
    random_baseline_curve,
    relevance,
    resolution,
    resolution_by_degeneracy,
    resolution_relevance,
    spin_codes,
    spin_labels,
    to_bits,
)
from nmlcodes.errors import InvalidInputError

count_lists = st.lists(st.integers(min_value=1, max_value=60), min_size=1, max_size=40)


def test_counts_and_degeneracy_of_small_samples():
    p = frequency_profile(["a", "a", "b"])
    assert p.counts == {"a": 2, "b": 1}
    assert p.degeneracy == {1: 1, 2: 1}
    assert frequency_profile(["a"] * 3).degeneracy == {3: 1}
    assert frequency_profile(list("abcd")).degeneracy == {1: 4}


def test_empty_sample_rejected():
    with pytest.raises(InvalidInputError, match="empty sample"):
        Sample(())
    with pytest.raises(InvalidInputError, match="empty sample"):
        frequency_profile([])


def test_declared_state_space_is_enforced():
    with pytest.raises(InvalidInputError):
        Sample(("a", "b", "c"), states=2)
    assert Sample(("a", "b"), states=5).N == 2


def test_resolution_hand_values():
    assert resolution(frequency_profile(["x"] * 7)) == 0.0
    assert resolution(frequency_profile(list("abcdefgh"))) == pytest.approx(math.log(8), abs=1e-14)
    assert resolution(frequency_profile(list("aabb"))) == pytest.approx(math.log(2), abs=1e-14)


def test_relevance_hand_values():
    assert relevance(frequency_profile(["x"] * 7)) == 0.0
    assert relevance(frequency_profile(list("abcdefgh"))) == pytest.approx(0.0, abs=1e-14)
    assert relevance(frequency_profile(list("aab"))) == pytest.approx(math.log(3) - 2 / 3 * math.log(2), abs=1e-14)


def test_bits_conversion():
    assert to_bits(math.log(2)) == pytest.approx(1.0)


@given(count_lists)
def test_ordering_of_entropies(k):
    p = FrequencyProfile.from_counts(k)
    rr = resolution_relevance(p)
    assert -1e-12 <= rr.relevance <= rr.resolution + 1e-12
    assert rr.resolution <= math.log(p.N) + 1e-12


@given(count_lists)
def test_two_resolution_forms_agree(k):
    p = FrequencyProfile.from_counts(k)
    a, b = resolution(p), resolution_by_degeneracy(p)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


@given(st.lists(st.integers(1, 200), min_size=1, max_size=30, unique=True))
def test_distinct_frequencies_make_relevance_equal_resolution(k):
    p = FrequencyProfile.from_counts(k)
    assert relevance(p) == pytest.approx(resolution(p), abs=1e-12)


@given(count_lists, st.randoms(use_true_random=False))
def test_invariant_under_permutation_and_relabeling(k, rnd):
    labels = [f"s{i}" for i, c in enumerate(k) for _ in range(c)]
    shuffled = labels[:]
    rnd.shuffle(shuffled)
    relabeled = ["new_" + x[::-1] for x in shuffled]
    base = resolution_relevance(frequency_profile(labels))
    for other in (shuffled, relabeled):
        rr = resolution_relevance(frequency_profile(other))
        assert rr.resolution == pytest.approx(base.resolution, abs=1e-12)
        assert rr.relevance == pytest.approx(base.relevance, abs=1e-12)


def test_degeneracy_sums_to_N():
    p = FrequencyProfile.from_counts([5, 3, 3, 1, 0])
    assert sum(k * m for k, m in p.degeneracy.items()) == p.N == 12
    assert list(p.degeneracy) == sorted(p.degeneracy)
    assert p.rank_table() == [(1, 5), (2, 3), (3, 3), (4, 1)]


def test_spin_sample_codes_and_labels():
    s = SpinSample([[1, -1], [0, 1], [1, 1]])
    assert s.spins.tolist() == [[1, -1], [-1, 1], [1, 1]]
    assert spin_codes(s.spins).tolist() == [1, 2, 3]
    assert spin_labels(s.spins) == ["+-", "-+", "++"]
    assert s.to_sample().states == 4
    p = frequency_profile(s)
    assert p.N == 3 and p.degeneracy == {1: 3}


def test_mis_zipf_tag_and_exponent_check():
    pts = mis_bound_curve(1000, [0.5, 1.0, 2.0])
    assert [p.zipf for p in pts] == [False, True, False]
    with pytest.raises(InvalidInputError, match="invalid exponent"):
        mis_point(1000, 0.0)


def test_mis_large_mu_approaches_all_distinct_end():
    # mass piles up on k = 1: almost every state seen once
    p = mis_point(1000, 50.0)
    assert p.resolution / math.log(1000) > 0.99
    assert p.relevance < 1e-6


def test_mis_slope_is_minus_mu():
    N = 10**4
    for mu in (0.5, 1.0, 1.5, 2.0):
        a, b = mis_bound_curve(N, [mu * 0.999, mu * 1.001])
        slope = (b.relevance - a.relevance) / (b.resolution - a.resolution)
        assert slope == pytest.approx(-mu, rel=0.1)


def test_baseline_trivial_limits():
    assert random_baseline(100, 1, 3, seed=0) == (0.0, 0.0)
    hs, hk = random_baseline(1000, 10**7, 5, seed=0)
    assert hs == pytest.approx(math.log(1000), abs=1e-3)
    assert hk < 0.01


def test_baseline_is_reproducible():
    assert random_baseline(500, 300, 4, seed=9) == random_baseline(500, 300, 4, seed=9)


def test_baseline_below_mis_curve():
    N = 1000
    hs, hk = random_baseline(N, N, 100, seed=1)
    assert hk < mis_relevance_at(N, hs)


@settings(deadline=None, max_examples=15)
@given(st.floats(min_value=0.6, max_value=4.0))
def test_mis_above_baseline_at_matched_resolution(mu):
    N = 1000
    curve = random_baseline_curve(N, np.unique(np.geomspace(2, 10**6, 80).astype(int)), 5, seed=3)
    p = mis_point(N, mu)
    grid_step = 0.05 * math.log(N)
    assert p.relevance >= baseline_relevance_at(curve, p.resolution) - grid_step
