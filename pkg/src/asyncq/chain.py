"""State-action Markov chains induced by behavior policies.

Covers the exact chain diagnostics (stationary distribution, mixing time,
cover time), their Monte Carlo counterparts, the two-block example chain, and
the seeded trajectory sampler every learner consumes.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import ConvergenceError, NotErgodicError, UsageError
from .mdp import ROW_TOL, Policy, TabularMdp

RNG_ALGORITHM = "numpy.PCG64"
COVER_EXACT_MAX_STATES = 14


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def hash64(seed: int, index: int) -> int:
    """Derive a documented 64-bit sub-seed from ``(seed, index)`` via SeedSequence."""
    state = np.random.SeedSequence([int(seed) % 2**64, int(index)]).generate_state(1, np.uint64)
    return int(state[0])


def stationary_distribution(kernel, tol: float = 1e-13, max_iters: int = 10**6) -> np.ndarray:
    """Power iteration on ``kernel.T`` from the uniform vector.

    Stops once successive iterates differ by less than ``tol`` in l1.
    """
    kernel = np.asarray(kernel, dtype=float)
    mu = np.full(kernel.shape[0], 1.0 / kernel.shape[0])
    kt = kernel.T.copy()
    diff = math.inf
    for _ in range(max_iters):
        nxt = kt @ mu
        nxt /= nxt.sum()
        diff = float(np.abs(nxt - mu).sum())
        mu = nxt
        if diff < tol:
            return mu
    raise NotErgodicError(
        f"stationary distribution did not converge (l1 step {diff:.3g}); "
        "chain is not uniformly ergodic"
    )


@dataclass(frozen=True, eq=False)
class StateActionChain:
    """Row-stochastic kernel over flattened state-action pairs.

    ``lambda2_analytic`` and ``analytic_stationary`` are only set for the
    example construction of :func:`build_example_chain`.
    """

    kernel: np.ndarray
    stationary: np.ndarray
    lambda2_analytic: float | None = None
    analytic_stationary: np.ndarray | None = None
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.kernel.setflags(write=False)
        self.stationary.setflags(write=False)
        object.__setattr__(self, "_cum", _kernels.cumulative_rows(self.kernel))

    @classmethod
    def from_kernel(cls, kernel, *, require_irreducible: bool = True, **analytic) -> StateActionChain:
        kernel = np.array(kernel, dtype=float)
        if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] < 1:
            raise UsageError("kernel must be a nonempty square matrix")
        if np.any(kernel < 0) or np.abs(kernel.sum(axis=1) - 1.0).max() > ROW_TOL:
            raise UsageError("kernel rows must be probability vectors")
        if require_irreducible:
            n_comp, _ = connected_components(kernel > 0, directed=True, connection="strong")
            if n_comp != 1:
                raise NotErgodicError(
                    f"chain has {n_comp} communicating classes; not uniformly ergodic"
                )
        return cls(kernel, stationary_distribution(kernel), **analytic)

    @property
    def n(self) -> int:
        return self.kernel.shape[0]

    @property
    def mu_min(self) -> float:
        return float(self.stationary.min())


def induce_chain(mdp: TabularMdp, behavior: Policy) -> StateActionChain:
    """Chain with ``P((s,a),(s',a')) = P(s'|s,a) * pi_b(a'|s')``."""
    behavior.check(mdp)
    kernel = mdp.flat_transition @ behavior.selection_matrix()
    return StateActionChain.from_kernel(kernel)


def total_variation(p, q) -> np.ndarray:
    """Row-wise total-variation distance ``0.5 * sum |p - q|``."""
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum(axis=-1)


def worst_tv(power: np.ndarray, mu: np.ndarray) -> float:
    return float(total_variation(power, mu[None, :]).max())


def tv_curve(chain: StateActionChain, t_max: int) -> np.ndarray:
    """``max_x d_TV(P^t(x, .), mu)`` for ``t = 1..t_max``."""
    out = np.empty(t_max)
    power = chain.kernel.copy()
    for t in range(1, t_max + 1):
        out[t - 1] = worst_tv(power, chain.stationary)
        power = power @ chain.kernel
    return out


def mixing_time(chain: StateActionChain, level: float = 0.25, t_max: int = 100_000) -> int:
    """Smallest ``t >= 1`` with worst-start TV distance to stationarity ``<= level``.

    Raises:
        ConvergenceError: if the level is not reached by ``t_max``; carries
            the TV distance at ``t_max``.
    """
    if not 0.0 < level < 1.0:
        raise UsageError("level must lie in (0, 1)")
    # worst-start TV is nonincreasing, so one check at t_max bounds the scan
    tv_end = worst_tv(np.linalg.matrix_power(chain.kernel, t_max), chain.stationary)
    if tv_end > level:
        raise ConvergenceError(f"chain does not mix to {level} within {t_max} steps", tv_end)
    power = chain.kernel.copy()
    for t in range(1, t_max + 1):
        if worst_tv(power, chain.stationary) <= level:
            return t
        power = power @ chain.kernel
    return t_max


def coverage_probabilities(chain: StateActionChain, t_max: int) -> np.ndarray:
    """``P(B_t | x_0)`` for ``t = 0..t_max`` and every start, by bitmask DP.

    Row ``t`` holds the probability that every state was visited within
    ``[0, t]``. Runs a backward recursion over (current state, visited set).
    """
    n = chain.n
    if n > COVER_EXACT_MAX_STATES:
        raise UsageError(
            f"exact cover time needs n <= {COVER_EXACT_MAX_STATES} (got {n}); use cover_time_mc"
        )
    return np.array(list(_coverage_iter(chain, t_max)))


def _coverage_iter(chain: StateActionChain, t_max: int):
    n = chain.n
    full = (1 << n) - 1
    masks = np.arange(1 << n)
    bits = 1 << np.arange(n)
    succ = masks[:, None] | bits[None, :]
    cols = np.arange(n)[None, :]
    starts = bits
    # f[mask, x]: probability of completing coverage in the remaining steps
    f = np.zeros((1 << n, n))
    f[full, :] = 1.0
    kt = chain.kernel.T
    for _ in range(t_max + 1):
        yield f[starts, np.arange(n)]
        f = f[succ, cols] @ kt


def cover_time_exact(chain: StateActionChain, t_max: int = 10**6) -> int:
    """Smallest ``t`` with ``min_x P(B_t | x) >= 1/2`` (time 0 counts as a visit)."""
    if chain.n > COVER_EXACT_MAX_STATES:
        raise UsageError(
            f"exact cover time needs n <= {COVER_EXACT_MAX_STATES} (got {chain.n}); "
            "use cover_time_mc"
        )
    for t, probs in enumerate(_coverage_iter(chain, t_max)):
        if probs.min() >= 0.5:
            return t
    raise ConvergenceError(f"cover probability below 1/2 after {t_max} steps", float(probs.min()))


class CoverEstimate(NamedTuple):
    estimate: int
    halfwidth: int


def cover_time_mc(chain: StateActionChain, n_trajectories: int = 1000, rng_seed: int = 0,
                  z: float = 1.96) -> CoverEstimate:
    """Monte Carlo cover time with a Wald-interval half-width.

    Start ``x`` uses the sub-seed ``hash64(rng_seed, x)``. The estimate is
    the first ``t`` whose worst-start lower confidence bound reaches 1/2; the
    half-width is its distance to the first ``t`` whose worst-start upper
    bound does.
    """
    if n_trajectories < 100:
        raise UsageError("n_trajectories must be at least 100")
    if connected_components(chain.kernel > 0, directed=True, connection="strong")[0] != 1:
        raise NotErgodicError("reducible chain never covers every state")
    times = []
    for x in range(chain.n):
        out = np.empty(n_trajectories, dtype=np.int64)
        _kernels.cover_times(chain._cum, x, make_rng(hash64(rng_seed, x)), n_trajectories, out)
        out.sort()
        times.append(out)
    horizon = int(max(t[-1] for t in times))

    def bound_reaches_half(t, sign):
        worst = math.inf
        for sorted_times in times:
            p = bisect.bisect_right(sorted_times, t) / n_trajectories
            worst = min(worst, p + sign * z * math.sqrt(p * (1 - p) / n_trajectories))
        return worst >= 0.5

    t_hi = bisect.bisect_left(range(horizon + 1), True, key=lambda t: bound_reaches_half(t, -1))
    t_lo = bisect.bisect_left(range(horizon + 1), True, key=lambda t: bound_reaches_half(t, +1))
    return CoverEstimate(t_hi, t_hi - t_lo)


def occupancy_check(chain: StateActionChain, t: int, reps: int, rng_seed: int,
                    start: int | None = None) -> float:
    """Fraction of reps in which some state gets at most ``t * mu(x) / 2`` visits.

    Each rep walks ``X_1..X_t`` from ``start``; by default reps cycle through
    every start state.
    """
    if t < 1:
        raise UsageError("t must be at least 1")
    if start is None:
        starts = np.arange(reps, dtype=np.int64) % chain.n
    else:
        starts = np.full(reps, start, dtype=np.int64)
    failures = _kernels.occupancy_failures(chain._cum, np.asarray(chain.stationary), int(t),
                                           int(reps), starts, make_rng(rng_seed))
    return failures / reps


def occupancy_threshold(t_mix: int, mu_min: float, n: int, delta: float) -> int:
    """``443 * t_mix / mu_min * log(4n / delta)``, rounded up."""
    return math.ceil(443 * t_mix / mu_min * math.log(4 * n / delta))


def _check_example_params(n, k, q):
    if n < 4 or n % 2:
        raise UsageError("n must be an even integer >= 4")
    if k < 1:
        raise UsageError("k must be >= 1")
    if q <= 0 or q * (k + 1) >= 2:
        raise UsageError("q must be positive with q*(k+1) < 2")


def example_kernel(n: int, k: float, q: float) -> np.ndarray:
    _check_example_params(n, k, q)
    half = n // 2
    block = np.empty((n, n))
    block[:, :half] = k
    block[:, half:] = 1.0
    return (1.0 - q * (k + 1) / 2) * np.eye(n) + (q / n) * block


def build_example_chain(n: int, k: float, q: float) -> StateActionChain:
    """Two-block chain: lazy identity plus a rank-one jump weighting the first half by ``k``.

    Its stationary law is ``2/((k+1)n) * (k,..,k,1,..,1)`` and every
    nontrivial eigenvalue equals ``1 - q(k+1)/2``.
    """
    kernel = example_kernel(n, k, q)
    half = n // 2
    mu = np.empty(n)
    mu[:half] = 2.0 * k / ((k + 1) * n)
    mu[half:] = 2.0 / ((k + 1) * n)
    mu.setflags(write=False)
    return StateActionChain.from_kernel(kernel, lambda2_analytic=1.0 - q * (k + 1) / 2,
                                        analytic_stationary=mu)


def example_mu_min(n: int, k: float) -> float:
    return 2.0 / ((k + 1) * n)


def example_chain_mdp(n: int, k: float, q: float, gamma: float, reward=None) -> TabularMdp:
    """Single-action MDP whose induced chain is :func:`build_example_chain`.

    The default reward ramps linearly from 0 at the first state to 1 at the last.
    """
    kernel = example_kernel(n, k, q)
    if reward is None:
        reward = np.linspace(0.0, 1.0, n)
    return TabularMdp(kernel[:, None, :], np.asarray(reward, dtype=float)[:, None], gamma)


class Transition(NamedTuple):
    s: int
    a: int
    r: float
    s_next: int


class TransitionBlock(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray


class TrajectorySampler:
    """Seeded single-trajectory sampler for an MDP under a behavior policy.

    Every step consumes two PCG64 uniforms (action, then next state), whether
    it is drawn by :meth:`step` or in bulk by :meth:`sample`.
    """

    def __init__(self, mdp: TabularMdp, behavior: Policy, rng_seed: int, initial_state: int = 0):
        behavior.check(mdp)
        if not 0 <= initial_state < mdp.n_states:
            raise UsageError("initial_state out of range")
        self.mdp = mdp
        self.behavior = behavior
        self.rng_seed = int(rng_seed)
        self.rng = make_rng(self.rng_seed)
        self.current_state = int(initial_state)
        self.t = 0
        self._cum_pi = _kernels.cumulative_rows(behavior.probs)
        self._cum_p = _kernels.cumulative_rows(mdp.flat_transition)

    def step(self) -> Transition:
        s = self.current_state
        a = int(np.searchsorted(self._cum_pi[s], self.rng.random(), side="right"))
        idx = s * self.mdp.n_actions + a
        s_next = int(np.searchsorted(self._cum_p[idx], self.rng.random(), side="right"))
        self.current_state = s_next
        self.t += 1
        return Transition(s, a, float(self.mdp.flat_reward[idx]), s_next)

    def sample(self, n_steps: int) -> TransitionBlock:
        s = np.empty(n_steps, dtype=np.int64)
        a = np.empty(n_steps, dtype=np.int64)
        s_next = np.empty(n_steps, dtype=np.int64)
        self.current_state = int(_kernels.walk_mdp(self._cum_pi, self._cum_p, self.current_state,
                                                   self.rng, n_steps, s, a, s_next))
        self.t += n_steps
        return TransitionBlock(s, a, s_next)


@dataclass
class VisitCounter:
    """Visit counts ``K_t(s, a)`` over flattened pairs."""

    counts: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n_pairs: int) -> VisitCounter:
        return cls(np.zeros(n_pairs, dtype=np.int64))

    def record(self, idx: int) -> None:
        self.counts[idx] += 1
        self.t += 1

    def record_many(self, idx: np.ndarray) -> None:
        self.counts += np.bincount(idx, minlength=self.counts.size)
        self.t += idx.size

    @property
    def min_count(self) -> int:
        return int(self.counts.min())


def chain_report_row(chain: StateActionChain, t_mix, t_cover, halfwidth) -> dict:
    lam = "" if chain.lambda2_analytic is None else repr(chain.lambda2_analytic)
    return {
        "n": chain.n,
        "mu_min": repr(chain.mu_min),
        "t_mix": "" if t_mix is None else t_mix,
        "t_cover": "" if t_cover is None else t_cover,
        "t_cover_halfwidth": "" if halfwidth is None else halfwidth,
        "lambda2_analytic": lam,
    }


CHAIN_REPORT_COLUMNS = ["n", "mu_min", "t_mix", "t_cover", "t_cover_halfwidth", "lambda2_analytic"]
