import itertools
import math

import numpy as np
import pytest
from scipy.special import logsumexp

from nmlcodes.errors import InvalidInputError, NumericalError
from nmlcodes.models.rbm import (
    CDConfig,
    RBMParams,
    all_visible_states,
    log_unnormalized,
    random_init,
    rbm_exact_gradient,
    rbm_fit_cd,
    rbm_fit_exact,
    rbm_log_likelihood,
    rbm_log_partition,
    to_hidden01,
    to_hiddenpm1,
)


def random_rbm(nv, nh, rng, convention="hidden01", scale=0.8):
    return RBMParams(rng.normal(0, scale, nv), rng.normal(0, scale, nh), rng.normal(0, scale, (nv, nh)), convention)


def brute_force_loglik(v, p: RBMParams) -> float:
    """Sum the joint over every (visible, hidden) configuration."""
    hidden_vals = (0, 1) if p.unit_convention == "hidden01" else (-1, 1)
    nv, nh = p.w.shape

    def log_joint(x, h):
        return x @ p.a + np.asarray(h) @ p.b + x @ p.w @ np.asarray(h)

    hs = [np.array(h, dtype=float) for h in itertools.product(hidden_vals, repeat=nh)]
    xs = [np.array(x, dtype=float) for x in itertools.product((0, 1), repeat=nv)]
    logZ = logsumexp([log_joint(x, h) for x in xs for h in hs])
    return float(sum(logsumexp([log_joint(x, h) for h in hs]) - logZ for x in v))


def sample_from(p: RBMParams, N, rng):
    v = all_visible_states(p.n_visible)
    lu = log_unnormalized(v, p)
    prob = np.exp(lu - logsumexp(lu))
    return v[rng.choice(len(v), N, p=prob)]


@pytest.mark.parametrize("convention", ["hidden01", "hiddenpm1"])
def test_likelihood_matches_joint_enumeration(convention):
    rng = np.random.default_rng(0)
    p = random_rbm(3, 2, rng, convention)
    v = rng.integers(0, 2, size=(25, 3)).astype(float)
    assert rbm_log_likelihood(v, p) == pytest.approx(brute_force_loglik(v, p), abs=1e-10)


def test_zero_weights_factorize():
    rng = np.random.default_rng(1)
    a = rng.normal(size=4)
    p = RBMParams(a, rng.normal(size=3), np.zeros((4, 3)))
    v = rng.integers(0, 2, size=(30, 4)).astype(float)
    want = float((v @ a).sum() - 30 * np.log1p(np.exp(a)).sum())
    assert rbm_log_likelihood(v, p) == pytest.approx(want, abs=1e-10)


def test_conventions_agree_after_mapping():
    rng = np.random.default_rng(2)
    v = rng.integers(0, 2, size=(20, 4)).astype(float)
    pm = random_rbm(4, 3, rng, "hiddenpm1")
    p01 = to_hidden01(pm)
    assert p01.unit_convention == "hidden01"
    assert rbm_log_likelihood(v, p01) == pytest.approx(rbm_log_likelihood(v, pm), abs=1e-10)
    back = to_hiddenpm1(p01)
    assert np.allclose(back.w, pm.w) and np.allclose(back.a, pm.a) and np.allclose(back.b, pm.b)


def test_normalization():
    p = random_rbm(5, 3, np.random.default_rng(3))
    lu = log_unnormalized(all_visible_states(5), p)
    assert abs(np.exp(lu - rbm_log_partition(p)).sum() - 1) < 1e-10


def test_validation():
    with pytest.raises(InvalidInputError):
        RBMParams([0.0], [0.0], [[np.nan]])
    with pytest.raises(InvalidInputError):
        RBMParams([0.0], [0.0], [[0.0]], unit_convention="spins")
    with pytest.raises(InvalidInputError):
        rbm_log_likelihood(np.array([[2.0]]), RBMParams([0.0], [0.0], [[0.0]]))
    with pytest.raises(InvalidInputError):
        CDConfig(kappa=0)
    with pytest.raises(InvalidInputError):
        CDConfig(epsilon=0.0)


@pytest.mark.parametrize("convention", ["hidden01", "hiddenpm1"])
def test_gradient_matches_finite_differences(convention):
    rng = np.random.default_rng(4)
    p = random_rbm(3, 2, rng, convention)
    v = rng.integers(0, 2, size=(40, 3)).astype(float)
    g = rbm_exact_gradient(v, p)
    h = 1e-5
    for name in ("a", "b", "w"):
        arr = getattr(p, name)
        grad = getattr(g, name)
        for idx in np.ndindex(arr.shape):
            def shifted(d):
                new = {k: getattr(p, k).copy() for k in ("a", "b", "w")}
                new[name][idx] += d
                return rbm_log_likelihood(v, RBMParams(new["a"], new["b"], new["w"], convention))

            fd = (shifted(h) - shifted(-h)) / (2 * h)
            assert abs(fd - grad[idx]) <= 1e-5 * max(1.0, abs(grad[idx]))


def test_default_cd_config():
    cfg = CDConfig()
    assert (cfg.kappa, cfg.epsilon, cfg.epochs, cfg.minibatches, cfg.persistent) == (10, 0.01, 2500, 200, True)


def test_random_init_range():
    p = random_init(6, 4, seed=1)
    assert np.abs(p.w).max() <= 0.01 and not p.a.any() and not p.b.any()


def test_cd_recovers_generator_likelihood():
    rng = np.random.default_rng(0)
    gen = RBMParams(rng.normal(0, 1, 4), rng.normal(0, 1, 2), rng.normal(0, 1.5, (4, 2)))
    data = sample_from(gen, 1000, rng)
    history = []
    fit = rbm_fit_cd(data, config=CDConfig(kappa=10, epsilon=0.05, epochs=400, minibatches=20, seed=1), n_hidden=2, history=history)
    ll_gen = rbm_log_likelihood(data, gen)
    assert abs(rbm_log_likelihood(data, fit) - ll_gen) < 0.02 * abs(ll_gen)
    blocks = np.array(history).reshape(-1, 100).mean(axis=1)
    assert np.all(np.diff(blocks) > -1e-3 * abs(ll_gen))


def test_cd_keeps_convention_and_is_reproducible():
    rng = np.random.default_rng(5)
    data = rng.integers(0, 2, size=(60, 3)).astype(float)
    init = to_hiddenpm1(random_init(3, 2, seed=0))
    cfg = CDConfig(kappa=1, epsilon=0.05, epochs=5, minibatches=4, seed=2)
    a = rbm_fit_cd(data, init=init, config=cfg)
    b = rbm_fit_cd(data, init=init, config=cfg)
    assert a.unit_convention == "hiddenpm1"
    assert np.array_equal(a.w, b.w)


def test_cd_divergence_detected():
    data = np.random.default_rng(0).integers(0, 2, size=(10, 3)).astype(float)
    with np.errstate(all="ignore"), pytest.raises(NumericalError, match="training diverged"):
        rbm_fit_cd(data, n_hidden=2, config=CDConfig(kappa=1, epsilon=math.inf, epochs=2, minibatches=1))


def test_exact_ascent_increases_likelihood():
    rng = np.random.default_rng(6)
    data = rng.integers(0, 2, size=(100, 3)).astype(float)
    init = random_init(3, 2, seed=0)
    fit = rbm_fit_exact(data, init, epsilon=0.1, iterations=100)
    assert rbm_log_likelihood(data, fit) > rbm_log_likelihood(data, init)
