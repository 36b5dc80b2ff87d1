"""State-action chains: stationarity, mixing, cover times, occupancy and sampling."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asyncq.chain import (RNG_ALGORITHM, StateActionChain, TrajectorySampler, VisitCounter,
                          build_example_chain, coverage_probabilities, cover_time_exact,
                          cover_time_mc, example_chain_mdp, hash64, induce_chain,
                          occupancy_threshold, make_rng, mixing_time, occupancy_check,
                          tv_curve)
from asyncq.errors import ConvergenceError, NotErgodicError, UsageError
from asyncq.mdp import Policy, random_mdp

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def singleton():
    return StateActionChain.from_kernel(np.ones((1, 1)))


def test_singleton_chain():
    chain = singleton()
    assert chain.stationary.tolist() == [1.0]
    assert chain.mu_min == 1.0
    assert cover_time_exact(chain) == 0
    assert tuple(cover_time_mc(chain, 200)) == (0, 0)
    assert occupancy_check(chain, 5, 20, 0) == 0.0


@pytest.mark.parametrize("n,k,q,mu_min,lam", [(4, 1, 0.5, 0.25, 0.5), (8, 3, 0.25, 1 / 16, 0.5)])
def test_example_chain_closed_forms(n, k, q, mu_min, lam):
    chain = build_example_chain(n, k, q)
    assert chain.lambda2_analytic == lam
    assert chain.analytic_stationary.min() == mu_min
    assert np.abs(chain.stationary - chain.analytic_stationary).max() <= 1e-10
    eig = np.sort(np.linalg.eigvals(chain.kernel).real)
    assert eig[-1] == pytest.approx(1.0)
    assert np.allclose(eig[:-1], lam)


@settings(max_examples=30, deadline=None)
@given(half=st.integers(2, 8), k=st.floats(1.0, 6.0), frac=st.floats(0.01, 0.99))
def test_example_chain_stationary_matches_analytic(half, k, frac):
    q = frac * 2 / (k + 1)
    chain = build_example_chain(2 * half, k, q)
    assert np.abs(chain.stationary - chain.analytic_stationary).max() <= 1e-10


def test_example_chain_rejects_bad_parameters():
    for args in [(3, 1, 0.5), (4, 0.5, 0.5), (4, 1, 1.0), (4, 1, 0.0)]:
        with pytest.raises(UsageError):
            build_example_chain(*args)


def test_reducible_kernels_are_rejected():
    with pytest.raises(NotErgodicError):
        StateActionChain.from_kernel(np.eye(3))
    lazy = StateActionChain.from_kernel(np.eye(3), require_irreducible=False)
    with pytest.raises(ConvergenceError):
        mixing_time(lazy, t_max=50)
    with pytest.raises(NotErgodicError):
        cover_time_mc(lazy, 200)


def test_mixing_time_one_step_and_example():
    mu = np.array([0.2, 0.3, 0.5])
    assert mixing_time(StateActionChain.from_kernel(np.tile(mu, (3, 1)))) == 1
    # worst-start TV on the example chain is 0.75 * 0.5**t
    chain = build_example_chain(4, 1, 0.5)
    assert tv_curve(chain, 4) == pytest.approx(0.75 * 0.5 ** np.arange(1, 5))
    assert mixing_time(chain) == 2


def brute_force_cover(kernel, t):
    """P(every state visited within [0, t] | x0) by enumerating all paths."""
    n = len(kernel)
    out = np.zeros(n)
    for x0 in range(n):
        for path in itertools.product(range(n), repeat=t):
            prob, prev = 1.0, x0
            for x in path:
                prob *= kernel[prev, x]
                prev = x
            if len({x0, *path}) == n:
                out[x0] += prob
    return out


def test_coverage_dp_matches_path_enumeration():
    kernel = np.random.default_rng(7).dirichlet(np.ones(3), size=3)
    chain = StateActionChain.from_kernel(kernel)
    dp = coverage_probabilities(chain, 6)
    for t in range(7):
        assert dp[t] == pytest.approx(brute_force_cover(kernel, t), abs=1e-12)


def test_cover_time_small_cases():
    assert cover_time_exact(StateActionChain.from_kernel(SWAP)) == 1
    assert tuple(cover_time_mc(StateActionChain.from_kernel(SWAP), 200)) == (1, 0)
    chain = build_example_chain(4, 1, 0.5)
    exact = cover_time_exact(chain)
    assert exact == 13
    est = cover_time_mc(chain, 5000, rng_seed=1)
    assert abs(est.estimate - exact) <= est.halfwidth


def test_cover_time_exact_size_limit():
    big = StateActionChain.from_kernel(np.full((15, 15), 1 / 15))
    with pytest.raises(UsageError):
        cover_time_exact(big)
    assert cover_time_mc(big, 200).estimate > 0


def test_cover_time_mc_is_deterministic():
    chain = build_example_chain(6, 2, 0.3)
    assert cover_time_mc(chain, 500, 3) == cover_time_mc(chain, 500, 3)


def test_occupancy_edge_cases_and_threshold():
    chain = build_example_chain(4, 1, 0.5)
    assert occupancy_check(chain, 1, 50, 0) == 1.0
    t = occupancy_threshold(mixing_time(chain), chain.mu_min, chain.n, 0.1)
    assert t == math.ceil(443 * 2 / 0.25 * math.log(160))
    assert occupancy_check(chain, t, 50, 0) <= 0.1


def test_hash64_sub_seeds():
    assert hash64(5, 1) == hash64(5, 1)
    assert len({hash64(5, i) for i in range(100)}) == 100
    assert 0 <= hash64(2**63, 7) < 2**64
    assert RNG_ALGORITHM == "numpy.PCG64"
    assert make_rng(3).random() == np.random.Generator(np.random.PCG64(3)).random()


def test_induced_chain_kernel():
    mdp = random_mdp(3, 2, 0.9, seed=4)
    pi = Policy.uniform(3, 2)
    chain = induce_chain(mdp, pi)
    s, a, s2, a2 = 1, 0, 2, 1
    assert chain.kernel[s * 2 + a, s2 * 2 + a2] == pytest.approx(mdp.transition[s, a, s2] * 0.5)
    assert np.allclose(chain.kernel.sum(axis=1), 1.0)


def test_sampler_step_and_block_share_one_stream():
    mdp = random_mdp(4, 3, 0.9, seed=2)
    pi = Policy.uniform(4, 3)
    one, bulk = TrajectorySampler(mdp, pi, 9), TrajectorySampler(mdp, pi, 9)
    steps = [one.step() for _ in range(300)]
    blk = bulk.sample(300)
    assert [x.s for x in steps] == blk.s.tolist()
    assert [x.a for x in steps] == blk.a.tolist()
    assert [x.s_next for x in steps] == blk.s_next.tolist()
    assert blk.s[1:].tolist() == blk.s_next[:-1].tolist()
    assert one.current_state == bulk.current_state and one.t == bulk.t == 300
    # interleaving the two entry points continues the same stream
    assert one.step().s_next == int(bulk.sample(1).s_next[0])


def test_sampler_frequencies_follow_the_kernel():
    mdp = example_chain_mdp(4, 1, 0.5, 0.9)
    sampler = TrajectorySampler(mdp, Policy.uniform(4, 1), 0)
    blk = sampler.sample(200_000)
    counts = np.zeros((4, 4))
    np.add.at(counts, (blk.s, blk.s_next), 1)
    freq = counts / counts.sum(axis=1, keepdims=True)
    assert np.abs(freq - build_example_chain(4, 1, 0.5).kernel).max() < 0.01


def test_sampler_never_picks_zero_probability_actions():
    mdp = random_mdp(3, 3, 0.9, seed=0)
    pi = Policy.deterministic([2, 0, 1], 3)
    blk = TrajectorySampler(mdp, pi, 1).sample(5000)
    assert np.array_equal(blk.a, pi.actions[blk.s])


def test_visit_counter():
    c = VisitCounter.zeros(3)
    c.record(1)
    c.record_many(np.array([0, 1, 1]))
    assert c.counts.tolist() == [1, 3, 0] and c.t == 4 and c.min_count == 0
