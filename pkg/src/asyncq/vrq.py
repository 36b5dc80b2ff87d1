"""Variance-reduced asynchronous Q-learning run in epochs on one trajectory."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .chain import RNG_ALGORITHM, TrajectorySampler, Transition
from .errors import ConvergenceError, UsageError
from .mdp import Policy, TabularMdp, greedy_values, value_iteration
from .qlearning import LearnerState
from .trace import EpochTrace


@dataclass
class RecenteringEstimate:
    """Batch estimate of ``T(Q_bar)`` from ``N`` consecutive transitions.

    Unvisited pairs fall back to ``Q_bar(s, a)`` and are flagged.
    """

    t_bar: np.ndarray
    visit_counts: np.ndarray
    unvisited: np.ndarray

    @property
    def n_unvisited(self) -> int:
        return int(self.unvisited.sum())


@dataclass(frozen=True)
class VrConfig:
    M: int
    N: int
    t_epoch: int
    eta: float
    c0: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    log_factor: float | None = None

    def __post_init__(self):
        if self.M < 0 or self.N < 1 or self.t_epoch < 0:
            raise UsageError("need M >= 0, N >= 1 and t_epoch >= 0")
        if not 0.0 < self.eta <= 1.0:
            raise UsageError("eta must lie in (0, 1]")

    @property
    def samples(self) -> int:
        return self.M * (self.N + self.t_epoch)


def recentering_estimate(mdp: TabularMdp, q_bar, s, a, s_next) -> RecenteringEstimate:
    """Empirical ``r + gamma * mean(max_a' Q_bar(s', a'))`` per visited pair."""
    q_bar = np.asarray(q_bar, dtype=float)
    pairs = s * mdp.n_actions + a
    v_bar = greedy_values(q_bar, mdp.n_actions)
    counts = np.bincount(pairs, minlength=mdp.n_pairs)
    sums = np.bincount(pairs, weights=v_bar[s_next], minlength=mdp.n_pairs)
    unvisited = counts == 0
    t_bar = q_bar.copy()
    seen = ~unvisited
    t_bar[seen] = mdp.flat_reward[seen] + mdp.discount * sums[seen] / counts[seen]
    return RecenteringEstimate(t_bar, counts, unvisited)


def recenter(sampler: TrajectorySampler, q_bar, N: int) -> RecenteringEstimate:
    """Consume exactly ``N`` transitions and build the recentering estimate."""
    if N < 1:
        raise UsageError("N must be at least 1")
    blk = sampler.sample(N)
    return recentering_estimate(sampler.mdp, q_bar, blk.s, blk.a, blk.s_next)


def vr_step(state: LearnerState, transition: Transition, q_bar, estimate: RecenteringEstimate,
            eta: float, gamma: float, n_actions: int) -> LearnerState:
    """One recentred update at the sampled pair, in place."""
    s, a, r, s_next = transition
    q = state.q
    idx = s * n_actions + a
    row = slice(s_next * n_actions, (s_next + 1) * n_actions)
    target = (r + gamma * q[row].max()) - (r + gamma * np.asarray(q_bar)[row].max()) \
        + estimate.t_bar[idx]
    q[idx] = (1.0 - eta) * q[idx] + eta * target
    state.counter.record(idx)
    state.t += 1
    state.last_eta = eta
    return state


def run_epoch(q_bar, sampler: TrajectorySampler, N: int, t_epoch: int, eta: float):
    """Recenter on ``N`` samples, then ``t_epoch`` updates from ``Q_0 = Q_bar``.

    Returns the final table together with the recentering estimate.
    """
    mdp = sampler.mdp
    q_bar = np.asarray(q_bar, dtype=float)
    estimate = recenter(sampler, q_bar, N)
    q = q_bar.copy()
    v_bar = greedy_values(q_bar, mdp.n_actions)
    done = 0
    while done < t_epoch:
        n = min(1 << 16, t_epoch - done)
        blk = sampler.sample(n)
        _kernels.vr_updates(q, mdp.n_actions, blk.s, blk.a, blk.s_next, mdp.flat_reward,
                            mdp.discount, eta, v_bar, estimate.t_bar)
        done += n
    return q, estimate


def run_vrq(mdp: TabularMdp, behavior: Policy, config: VrConfig, rng_seed: int,
            record_every: int = 1, *, q_star=None, initial_state: int = 0):
    """Chain ``M`` epochs on one continuous trajectory from ``Q_0^epoch = 0``.

    Returns ``(Q_M, EpochTrace)``; trace row 0 is the zero table.
    """
    if q_star is None:
        q_star = value_iteration(mdp, tol=1e-10)
    sampler = TrajectorySampler(mdp, behavior, rng_seed, initial_state)
    q = np.zeros(mdp.n_pairs)
    rows = [(0, np.abs(q - q_star).max(), 0, 0)]
    for m in range(1, config.M + 1):
        q, est = run_epoch(q, sampler, config.N, config.t_epoch, config.eta)
        if m % record_every == 0 or m == config.M:
            rows.append((m, np.abs(q - q_star).max(), est.n_unvisited, sampler.t))
    epoch, err, unvisited, consumed = (np.array(c) for c in zip(*rows))
    metadata = {
        "seed": int(rng_seed),
        "config": {k: getattr(config, k) for k in ("M", "N", "t_epoch", "eta", "c0", "c1",
                                                    "c2", "c3", "log_factor")},
        "gamma": mdp.discount,
        "rng": RNG_ALGORITHM,
        "initial_state": int(initial_state),
        "unvisited_pairs_total": int(unvisited.sum()),
    }
    return q, EpochTrace(epoch, err, unvisited, consumed, metadata)


def recentering_size(mu_min, gamma, eps, t_mix, log_factor, c1=1.0) -> float:
    return c1 / mu_min * (1.0 / ((1.0 - gamma) ** 3 * min(1.0, eps**2)) + t_mix) * log_factor


def epoch_length(mu_min, gamma, eps, t_mix, log_factor, c2=1.0) -> float:
    return (c2 / mu_min * (1.0 / (1.0 - gamma) ** 3 + t_mix / (1.0 - gamma))
            * math.log(1.0 / ((1.0 - gamma) ** 2 * eps)) * log_factor)


def vrq_params(eps: float, delta: float, gamma: float, mu_min: float, t_mix: int, n_pairs: int,
               c0: float = 1.0, c1: float = 1.0, c2: float = 1.0, c3: float = 1.0) -> VrConfig:
    """Parameter recipe; ``t_epoch`` solves its own log factor by fixed-point iteration.

    Raises:
        ConvergenceError: if the fixed point does not settle in 100 rounds.
    """
    if min(eps, delta, mu_min, t_mix) <= 0 or eps > 1.0 / (1.0 - gamma) or delta >= 1:
        raise UsageError("need positive inputs with eps <= 1/(1-gamma) and delta < 1")
    t = 1e3
    for _ in range(100):
        nxt = epoch_length(mu_min, gamma, eps, t_mix, math.log(n_pairs * t / delta), c2)
        if abs(nxt - t) < 1e-6 * t:
            t = nxt
            break
        t = nxt
    else:
        raise ConvergenceError("t_epoch fixed point did not stabilize", abs(nxt - t) / t)
    t_epoch = math.ceil(t)
    log_factor = math.log(n_pairs * t_epoch / delta)
    eta = min(1.0, c0 / log_factor * min((1.0 - gamma) ** 2 / gamma**2, 1.0 / t_mix))
    N = math.ceil(recentering_size(mu_min, gamma, eps, t_mix, log_factor, c1))
    M = max(1, math.ceil(c3 * math.log(1.0 / (eps * (1.0 - gamma) ** 2))))
    return VrConfig(M, N, t_epoch, eta, c0, c1, c2, c3, log_factor)
