import math

import numpy as np
import pytest

from gpselect import (
    ModelIndicator,
    ParameterState,
    PriorConfig,
    SamplerConfig,
    accept_probability,
    load_chain,
    propose,
    run_chain,
    save_chain,
)
from gpselect.model import validate_consistent
from gpselect.sampler import reflect_unit

from oracles import log_prior_oracle, loglik_oracle, random_dataset, random_state


def _current(p, rng):
    ind, state = random_state(rng, p)
    return ind, state


def test_reflect_unit_stays_inside(rng):
    x = rng.normal(scale=2.0, size=10000)
    r = reflect_unit(x)
    assert np.all(r > 0.0) and np.all(r < 1.0)
    # folding is exact for single reflections
    assert reflect_unit(np.array([1.2]))[0] == pytest.approx(0.8, rel=1e-12)
    assert reflect_unit(np.array([-0.3]))[0] == pytest.approx(0.3, rel=1e-12)


def test_propose_keeps_consistency(rng):
    cfg = SamplerConfig()
    prior = PriorConfig()
    for _ in range(200):
        cur = _current(3, rng)
        ind, state = propose(cur, cfg, prior, rng)
        validate_consistent(ind, state)
        active = state.rho[ind.gamma_c == 1]
        assert np.all((active > 0.0) & (active < 1.0))
        assert state.lam >= 1e-10
        assert state.sigma2_z > 0


def test_propose_deactivation_snaps_to_point_mass(rng):
    # with nu = 1 every indicator flips, so active slots must deactivate
    cfg = SamplerConfig(nu=1.0)
    prior = PriorConfig()
    p = 3
    ind = ModelIndicator(np.ones(p, int), np.ones(p, int))
    state = ParameterState(
        beta0=0.0,
        beta=np.array([1.0, -2.0, 0.5]),
        rho=np.array([0.2, 0.5, 0.9]),
        sigma2_z=1.0,
        lam=0.1,
        omega_r=0.5,
        omega_c=0.5,
    )
    new_ind, new_state = propose((ind, state), cfg, prior, rng)
    assert np.all(new_ind.gamma_r == 0) and np.all(new_ind.gamma_c == 0)
    assert np.all(new_state.beta == 0.0)
    assert np.all(new_state.rho == 1.0)


def test_propose_activation_draws_fresh_values(rng):
    cfg = SamplerConfig(nu=1.0)
    prior = PriorConfig()
    p = 2
    ind = ModelIndicator(np.zeros(p, int), np.zeros(p, int))
    state = ParameterState(
        beta0=0.0, beta=np.zeros(p), rho=np.ones(p),
        sigma2_z=1.0, lam=0.1, omega_r=0.5, omega_c=0.5,
    )
    betas, rhos = [], []
    for _ in range(200):
        new_ind, new_state = propose((ind, state), cfg, prior, rng)
        assert np.all(new_ind.gamma_r == 1) and np.all(new_ind.gamma_c == 1)
        betas.extend(new_state.beta)
        rhos.extend(new_state.rho)
    betas = np.array(betas)
    rhos = np.array(rhos)
    assert np.all((rhos > 0) & (rhos < 1))
    # activation draws follow N(0, tau^2): spread should be near tau = 5
    assert 4.0 < betas.std() < 6.0
    assert abs(rhos.mean() - 0.5) < 0.05


def test_propose_zero_flips_only_walks(rng):
    # nu tiny: flips essentially never happen, indicators stay put
    cfg = SamplerConfig(nu=1e-12, jitter_when_no_flip=True)
    prior = PriorConfig()
    cur_ind, cur_state = _current(3, rng)
    ind, state = propose((cur_ind, cur_state), cfg, prior, rng)
    assert ind == cur_ind
    # jitter moved the active values, the walk moved the scalars
    assert state.sigma2_z != cur_state.sigma2_z
    assert state.beta0 != cur_state.beta0


def test_propose_no_flip_jitter_flag(rng):
    cfg = SamplerConfig(nu=1e-12, jitter_when_no_flip=False)
    prior = PriorConfig()
    cur_ind, cur_state = _current(3, rng)
    ind, state = propose((cur_ind, cur_state), cfg, prior, rng)
    assert np.array_equal(state.beta, cur_state.beta)
    assert np.array_equal(state.rho, cur_state.rho)


def test_accept_probability_identity_is_one(rng, small_data):
    prior = PriorConfig()
    cur = random_state(rng, 2)
    assert accept_probability(cur, cur, small_data, prior) == 1.0


def test_accept_probability_matches_oracle(rng, small_data):
    from gpselect import log_jacobian, to_unconstrained
    from scipy.stats import norm

    prior = PriorConfig()
    cur = random_state(rng, 2)
    prop = random_state(rng, 2)

    def target(pair):
        ind, state = pair
        return (
            loglik_oracle(small_data, state)
            + log_prior_oracle(ind, state, prior)
            + log_jacobian(to_unconstrained(state))
        )

    # fresh-slab flips exchange their proposal density against the slab prior
    corr = 0.0
    for j in range(2):
        if cur[0].gamma_r[j] == 1 and prop[0].gamma_r[j] == 0:
            corr += norm.logpdf(cur[1].beta[j], scale=prior.tau)
        if cur[0].gamma_r[j] == 0 and prop[0].gamma_r[j] == 1:
            corr -= norm.logpdf(prop[1].beta[j], scale=prior.tau)

    delta = target(prop) - target(cur) + corr
    expected = min(1.0, math.exp(min(delta, 700.0)))
    assert accept_probability(cur, prop, small_data, prior) == pytest.approx(
        expected, rel=1e-9
    )


def test_accept_probability_plain_ratio_without_flips(rng, small_data):
    # identical indicators: the ratio is the bare posterior + Jacobian delta
    from gpselect import log_jacobian, to_unconstrained

    prior = PriorConfig()
    ind, state = random_state(rng, 2)
    prop_state = state.copy()
    prop_state.sigma2_z *= 1.3
    prop_state.beta0 += 0.2

    def target(s):
        return (
            loglik_oracle(small_data, s)
            + log_prior_oracle(ind, s, prior)
            + log_jacobian(to_unconstrained(s))
        )

    delta = target(prop_state) - target(state)
    expected = min(1.0, math.exp(min(delta, 700.0)))
    assert accept_probability(
        (ind, state), (ind, prop_state), small_data, prior
    ) == pytest.approx(expected, rel=1e-9)


def test_accept_probability_capped_at_one(rng, small_data):
    prior = PriorConfig()
    cur = random_state(rng, 2)
    # make the proposal identical except for a much better-supported lambda;
    # either direction the probability must stay within [0, 1]
    prop_ind, prop_state = cur[0].copy(), cur[1].copy()
    prop_state.lam = 0.08
    a = accept_probability(cur, (prop_ind, prop_state), small_data, prior)
    b = accept_probability((prop_ind, prop_state), cur, small_data, prior)
    assert 0.0 <= a <= 1.0 and 0.0 <= b <= 1.0
    assert a == 1.0 or b == 1.0  # one direction is uphill


def test_run_chain_single_draw(small_data):
    cfg = SamplerConfig(n_iter=6, burn_in=5, thin=1, seed=1)
    chain = run_chain(small_data, PriorConfig(), cfg)
    assert len(chain) == 1


def test_run_chain_thinning_arithmetic(small_data):
    cfg = SamplerConfig(n_iter=107, burn_in=7, thin=10, seed=1)
    chain = run_chain(small_data, PriorConfig(), cfg)
    assert len(chain) == (107 - 7) // 10


def test_run_chain_deterministic(small_data, tmp_path):
    cfg = SamplerConfig(n_iter=300, burn_in=50, seed=42)
    c1 = run_chain(small_data, PriorConfig(), cfg)
    c2 = run_chain(small_data, PriorConfig(), cfg)
    save_chain(c1, tmp_path / "a.jsonl")
    save_chain(c2, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_run_chain_draws_are_consistent(small_data):
    cfg = SamplerConfig(n_iter=500, burn_in=100, seed=3)
    chain = run_chain(small_data, PriorConfig(), cfg)
    for i in range(0, len(chain), 37):
        ind, state = chain.draw(i)
        validate_consistent(ind, state)
        active = state.rho[ind.gamma_c == 1]
        assert np.all((active > 0.0) & (active < 1.0))


def test_run_chain_acceptance_strictly_interior(small_data):
    cfg = SamplerConfig(n_iter=10000, burn_in=100, seed=11)
    chain = run_chain(small_data, PriorConfig(), cfg)
    assert 0.0 < chain.acceptance_rate < 1.0
    assert chain.accepted.any() and not chain.accepted.all()


def test_flat_likelihood_recovers_indicator_prior(rng):
    # lighter version of the acceptance check: marginal P(gamma = 1) = 1/2;
    # a prior draw starts the chain in stationarity
    data = random_dataset(rng, n=5, p=3)
    cfg = SamplerConfig(n_iter=12000, burn_in=2000, seed=9, init="prior")
    chain = run_chain(data, PriorConfig(), cfg, flat_likelihood=True)
    freqs = np.concatenate([chain.gamma_r.mean(0), chain.gamma_c.mean(0)])
    assert np.all(np.abs(freqs - 0.5) < 0.08)


def test_chain_round_trip(small_data, tmp_path):
    cfg = SamplerConfig(n_iter=200, burn_in=20, seed=5)
    chain = run_chain(small_data, PriorConfig(), cfg)
    path = tmp_path / "chain.jsonl"
    save_chain(chain, path)
    loaded = load_chain(path)
    assert len(loaded) == len(chain)
    assert np.array_equal(loaded.gamma_r, chain.gamma_r)
    assert np.array_equal(loaded.beta, chain.beta)
    assert np.array_equal(loaded.rho, chain.rho)
    assert np.array_equal(loaded.log_posts, chain.log_posts)
    assert np.array_equal(loaded.iters, chain.iters)


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(n_iter=10, burn_in=10).validate()
    with pytest.raises(ValueError):
        SamplerConfig(thin=0).validate()
    with pytest.raises(ValueError):
        SamplerConfig(nu=1.5).validate()
    with pytest.raises(ValueError):
        SamplerConfig(rw_sd=(0.1, 0.1)).validate()
