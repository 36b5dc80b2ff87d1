"""Tabular MDP model, Bellman operator, solvers and file format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asyncq.errors import ConvergenceError, UsageError
from asyncq.mdp import (Policy, TabularMdp, bellman_optimality, format_mdp, greedy_policy,
                        parse_mdp, policy_evaluation_exact, policy_value, random_mdp,
                        value_iteration, variance_vector)


def single_state(r=1.0, gamma=0.5):
    return TabularMdp(np.ones((1, 1, 1)), np.array([[r]]), gamma)


def two_cycle(gamma=0.5):
    p = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
    return TabularMdp(p, np.array([[1.0], [0.0]]), gamma)


def test_bellman_single_state_from_zero():
    assert bellman_optimality(single_state(), np.zeros(1)).tolist() == [1.0]


def test_bellman_fixed_point_at_q_star():
    mdp = random_mdp(4, 2, 0.9, seed=3)
    q = value_iteration(mdp)
    assert np.abs(bellman_optimality(mdp, q) - q).max() <= 1e-10


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), gamma=st.sampled_from([0.5, 0.9, 0.99]))
def test_bellman_is_a_contraction(seed, gamma):
    mdp = random_mdp(4, 2, gamma, seed=seed)
    rng = np.random.default_rng(seed)
    q1, q2 = rng.normal(size=(2, mdp.n_pairs)) * 5
    lhs = np.abs(bellman_optimality(mdp, q1) - bellman_optimality(mdp, q2)).max()
    assert lhs <= gamma * np.abs(q1 - q2).max() + 1e-12


def test_value_iteration_closed_forms():
    assert value_iteration(single_state()) == pytest.approx([2.0], abs=1e-9)
    zero = TabularMdp(random_mdp(3, 2, 0.9, seed=0).transition, np.zeros((3, 2)), 0.9)
    assert value_iteration(zero).tolist() == [0.0] * 6


@pytest.mark.parametrize("seed", range(5))
def test_value_iteration_matches_greedy_policy_evaluation(seed):
    mdp = random_mdp(5, 3, 0.9, seed=seed)
    q = value_iteration(mdp)
    exact = policy_evaluation_exact(mdp, greedy_policy(q, mdp.n_actions))
    assert np.abs(q - exact).max() <= 1e-8


def test_value_iteration_reports_nonconvergence():
    with pytest.raises(ConvergenceError) as info:
        value_iteration(random_mdp(3, 2, 0.99, seed=1), tol=1e-12, max_iters=5)
    assert info.value.value > 1e-12


def test_policy_evaluation_closed_forms():
    mdp = single_state(gamma=0.9)
    assert policy_evaluation_exact(mdp, Policy.uniform(1, 1))[0] == pytest.approx(10.0)
    v = policy_value(two_cycle(), Policy.uniform(2, 1))
    # V1 = 1 + V2/2, V2 = V1/2
    oracle = np.linalg.inv(np.array([[1.0, -0.5], [-0.5, 1.0]])) @ np.array([1.0, 0.0])
    assert v == pytest.approx([4 / 3, 2 / 3], abs=1e-12)
    assert v == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_policy_value_satisfies_its_fixed_point(seed):
    mdp = random_mdp(6, 3, 0.9, seed=seed)
    rng = np.random.default_rng(seed)
    policy = Policy(rng.dirichlet(np.ones(3), size=6))
    v = policy_value(mdp, policy)
    r_pi = (policy.probs * mdp.reward).sum(axis=1)
    p_pi = np.einsum("sa,sat->st", policy.probs, mdp.transition)
    assert np.abs(r_pi + mdp.discount * p_pi @ v - v).max() <= 1e-10


def test_variance_vector_cases():
    mdp = random_mdp(3, 2, 0.9, seed=0)
    assert np.abs(variance_vector(mdp, np.full(3, 7.0))).max() <= 1e-12
    det = two_cycle()
    assert variance_vector(det, np.array([3.0, -1.0])).tolist() == [0.0, 0.0]
    coin = TabularMdp(np.full((2, 1, 2), 0.5), np.zeros((2, 1)), 0.9)
    assert variance_vector(coin, np.array([0.0, 2.0])) == pytest.approx([1.0, 1.0])


def test_greedy_policy_breaks_ties_toward_lowest_action():
    assert greedy_policy(np.array([1.0, 1.0, 0.0, 2.0]), 2).actions.tolist() == [0, 1]


def test_model_validation():
    with pytest.raises(UsageError):
        TabularMdp(np.full((1, 1, 2), 0.6), np.zeros((1, 1)), 0.9)
    with pytest.raises(UsageError):
        TabularMdp(np.ones((1, 1, 1)), np.array([[1.5]]), 0.9)
    with pytest.raises(UsageError):
        TabularMdp(np.ones((1, 1, 1)), np.zeros((1, 1)), 1.0)


def test_file_format_round_trip():
    mdp = random_mdp(3, 2, 0.75, seed=11)
    back = parse_mdp(format_mdp(mdp))
    assert back.discount == mdp.discount
    assert np.array_equal(back.transition, mdp.transition)
    assert np.array_equal(back.reward, mdp.reward)


def test_file_format_comments_and_errors():
    text = "# one state\nmdp 1 1 0.5\nr 0 0 1  # reward\np 0 0 1\n"
    assert value_iteration(parse_mdp(text)) == pytest.approx([2.0], abs=1e-9)
    with pytest.raises(UsageError):
        parse_mdp("mdp 1 1 0.5\nr 0 0 1\n")
