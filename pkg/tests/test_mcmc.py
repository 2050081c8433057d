import math

import numpy as np
import pytest

from nmlcodes.core import frequency_profile, relevance, resolution, SpinSample
from nmlcodes.errors import FitError, InvalidInputError, NumericalError
from nmlcodes.models.rbm import CDConfig
from nmlcodes.nml_mcmc import (
    ChainConfig,
    ParamagnetModel,
    RBMModel,
    SKModel,
    UniformModel,
    acceptance_probability,
    exact_transition_matrix,
    run_chain,
    tune_r,
)
from nmlcodes.spin import single_spin_nml_pmf


def test_zero_change_always_accepted():
    assert acceptance_probability(0.0, 0.0, 0.7, 100) == 1.0
    assert acceptance_probability(-1.0, 0.0, 0.0, 10) == pytest.approx(math.exp(-1))
    assert acceptance_probability(0.0, -0.1, 2.0, 10) == pytest.approx(math.exp(-2))


def test_chain_config_validation():
    with pytest.raises(InvalidInputError):
        ChainConfig(r=0)
    with pytest.raises(InvalidInputError):
        ChainConfig(burn_in=10, steps=10)
    with pytest.raises(InvalidInputError):
        ChainConfig(thin=0)


@pytest.mark.parametrize("beta", [-0.7, 0.0, 0.5])
@pytest.mark.parametrize("r", [1, 2])
def test_detailed_balance_paramagnet(beta, r):
    _, log_target, T = exact_transition_matrix(ParamagnetModel(1), 4, r=r, beta=beta)
    pi = np.exp(log_target - log_target.max())
    pi /= pi.sum()
    flow = pi[:, None] * T
    assert np.abs(flow - flow.T).max() < 1e-10
    assert np.allclose(T.sum(axis=1), 1.0)
    assert np.abs(pi @ T - pi).max() < 1e-12


def test_target_is_nml_at_zero_tilt():
    states, log_target, _ = exact_transition_matrix(ParamagnetModel(1), 4)
    pi = np.exp(log_target - log_target.max())
    pi /= pi.sum()
    ups = (states[:, :, 0] > 0).sum(axis=1)
    by_ell = np.bincount(ups, weights=pi, minlength=5)
    assert by_ell == pytest.approx(single_spin_nml_pmf(4), abs=1e-12)


def test_detailed_balance_two_spins():
    _, log_target, T = exact_transition_matrix(ParamagnetModel(2), 3, beta=0.3)
    pi = np.exp(log_target - log_target.max())
    pi /= pi.sum()
    flow = pi[:, None] * T
    assert np.abs(flow - flow.T).max() < 1e-10


def test_transition_matrix_budget():
    with pytest.raises(InvalidInputError):
        exact_transition_matrix(ParamagnetModel(3), 10)


def test_tilted_chain_matches_enumeration():
    beta = 0.5
    states, log_target, _ = exact_transition_matrix(ParamagnetModel(1), 4, beta=beta)
    pi = np.exp(log_target - log_target.max())
    pi /= pi.sum()
    weights = 2 ** np.arange(4)
    counts = np.zeros(16)

    def record(step, spins):
        counts[int(((spins[:, 0] > 0) * weights).sum())] += 1

    run_chain(ParamagnetModel(1), 4, ChainConfig(burn_in=1000, thin=1, steps=300_000, beta=beta, seed=4), keep_samples=False, on_record=record)
    assert 0.5 * np.abs(counts / counts.sum() - pi).sum() < 0.02


def test_records_consistent_with_samples():
    res = run_chain(ParamagnetModel(3), 40, ChainConfig(r=2, burn_in=50, thin=25, steps=2000, seed=1))
    assert len(res.records) == len(res.samples) == (2000 - 50) // 25
    for rec, s in zip(res.records, res.samples):
        p = frequency_profile(SpinSample(s))
        assert rec.resolution == pytest.approx(resolution(p), abs=1e-10)
        assert rec.relevance == pytest.approx(relevance(p), abs=1e-10)
        assert rec.kmax_frac == p.kmax / 40
        assert rec.loglik == pytest.approx(ParamagnetModel(3).fit(s)[0], abs=1e-9)
        assert 0.0 <= rec.acc_rate <= 1.0


def test_chain_reproducible():
    cfg = ChainConfig(r=3, burn_in=10, thin=10, steps=1000, beta=0.2, seed=8)
    a = run_chain(ParamagnetModel(4), 30, cfg)
    b = run_chain(ParamagnetModel(4), 30, cfg)
    assert a.records == b.records
    assert all(np.array_equal(x, y) for x, y in zip(a.samples, b.samples))


def test_independent_chains_agree():
    means, ses = [], []
    for seed in (1, 2):
        res = run_chain(ParamagnetModel(3), 50, ChainConfig(burn_in=5000, thin=20, steps=200_000, seed=seed), keep_samples=False)
        H = res.resolutions()
        blocks = np.array([b.mean() for b in np.array_split(H, 10)])
        means.append(H.mean())
        ses.append(blocks.std(ddof=1) / math.sqrt(10))
    assert abs(means[0] - means[1]) < 2 * math.hypot(*ses)


class FlakyModel(ParamagnetModel):
    def __init__(self, n, every):
        super().__init__(n)
        self.every = every
        self.calls = 0

    def fit(self, spins, warm=None, seed=0):
        self.calls += 1
        if self.calls > 1 and self.calls % self.every == 0:
            raise FitError("moment matching failed to converge")
        return super().fit(spins, warm, seed)

    refit = None


def test_fit_failure_rejects_and_continues():
    model = FlakyModel(2, every=50)
    res = run_chain(model, 20, ChainConfig(burn_in=0, thin=1, steps=1000, seed=0))
    assert res.fit_failures == 20
    assert len(res.records) == 1000


def test_repeated_fit_failure_raises():
    with pytest.raises(NumericalError, match="unstable refit"):
        run_chain(FlakyModel(2, every=2), 20, ChainConfig(burn_in=0, thin=1, steps=1000, seed=0))


def test_sk_chain_runs():
    res = run_chain(SKModel(3), 60, ChainConfig(burn_in=50, thin=50, steps=500, seed=2))
    assert res.records and all(r.loglik <= 0 for r in res.records)


def test_sk_refit_is_maximum_likelihood():
    rng = np.random.default_rng(1)
    spins = rng.choice([-1, 1], size=(80, 3)).astype(np.int8)
    ll_cold, params = SKModel(3).fit(spins)
    spins[0, 0] *= -1
    ll_warm, _ = SKModel(3).fit(spins, params)
    ll_fresh, _ = SKModel(3).fit(spins)
    assert ll_warm == pytest.approx(ll_fresh, abs=1e-8)


def test_rbm_chain_runs():
    model = RBMModel(
        3,
        2,
        cd_config=CDConfig(kappa=1, epsilon=0.05, epochs=2, minibatches=2),
        initial_config=CDConfig(kappa=1, epsilon=0.05, epochs=20, minibatches=2),
    )
    res = run_chain(model, 20, ChainConfig(burn_in=10, thin=10, steps=60, seed=3))
    assert len(res.records) == 5
    with pytest.raises(InvalidInputError):
        RBMModel(3, 2, fit_method="newton")


def test_tune_r_degenerate_model_keeps_initial_r():
    out = tune_r(UniformModel(4), 50, r0=2, pilot_steps=50)
    assert out.r == 2 and not out.warning
    assert out.acceptance == 1.0


def test_tune_r_paramagnet_brackets_target():
    out = tune_r(ParamagnetModel(12), 1000, pilot_steps=300, seed=1)
    assert not out.warning
    assert 0.15 < out.acceptance < 0.5


def test_tune_r_warns_when_target_unreachable():
    out = tune_r(ParamagnetModel(12), 1000, target_acceptance=0.99, pilot_steps=300, seed=1)
    assert out.r == 1 and out.warning


def test_tune_r_validates_target():
    with pytest.raises(InvalidInputError):
        tune_r(UniformModel(2), 10, target_acceptance=1.0)
