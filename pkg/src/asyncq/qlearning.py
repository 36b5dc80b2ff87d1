"""Asynchronous Q-learning and TD learning on a single Markovian trajectory."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .chain import RNG_ALGORITHM, TrajectorySampler, Transition, VisitCounter
from .errors import UsageError
from .mdp import Policy, TabularMdp, value_iteration
from .trace import RunTrace

BLOCK = 1 << 16


@dataclass(frozen=True)
class Constant:
    eta: float

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise UsageError(f"constant learning rate must lie in (0, 1], got {self.eta}")

    def rates(self, t: np.ndarray) -> np.ndarray:
        return np.full(t.shape, float(self.eta))


@dataclass(frozen=True)
class Linear:
    def rates(self, t: np.ndarray) -> np.ndarray:
        return 1.0 / t


@dataclass(frozen=True)
class Polynomial:
    omega: float

    def __post_init__(self):
        if not 0.5 < self.omega < 1.0:
            raise UsageError(f"omega must lie in (1/2, 1), got {self.omega}")

    def rates(self, t: np.ndarray) -> np.ndarray:
        return np.power(t.astype(float), -self.omega)


@dataclass(frozen=True)
class RescaledLinear:
    """``eta_t = scale / (t + offset)``."""

    scale: float
    offset: float

    def __post_init__(self):
        if self.scale <= 0 or self.offset < 0 or self.scale > 1.0 + self.offset:
            raise UsageError("rescaled linear rates need 0 < scale <= 1 + offset")

    @classmethod
    def from_chain(cls, mu_min: float, gamma: float, t_mix: int, c: float = 1.0) -> RescaledLinear:
        """Scale ``c/(mu_min(1-gamma))`` with offset ``max(1/(mu_min(1-gamma)), t_mix)``."""
        h = 1.0 / (mu_min * (1.0 - gamma))
        return cls(c * h, max(h, float(t_mix)))

    def rates(self, t: np.ndarray) -> np.ndarray:
        return self.scale / (t + self.offset)


@dataclass(frozen=True)
class Adaptive:
    """Data-driven, piecewise-constant rates driven by the running ``mu_min`` estimate."""

    c_eta: float = 1.0

    def __post_init__(self):
        if self.c_eta <= 0:
            raise UsageError("c_eta must be positive")


Schedule = Constant | Linear | Polynomial | RescaledLinear | Adaptive


def schedule_params(schedule) -> dict:
    return {"variant": type(schedule).__name__, **asdict(schedule)}


def adaptive_mu_update(mu_hat_prev: float, min_count: int, t: int, n_pairs: int) -> float:
    """One step of the running estimate of the smallest visit frequency."""
    if min_count == 0:
        return 1.0 / n_pairs
    if mu_hat_prev <= 0:
        raise RuntimeError("mu_hat must stay positive once every pair is visited")
    freq = min_count / t
    if 0.5 < freq / mu_hat_prev < 2.0:
        return mu_hat_prev
    return freq


def adaptive_eta(t: int, mu_hat: float, gamma: float, c_eta: float = 1.0) -> float:
    """``min(1, c_eta * exp(floor(log(log t / (mu_hat (1-gamma) gamma^2 t)))))``."""
    x = math.log(math.log(t) / (mu_hat * ((1.0 - gamma) * gamma * gamma) * t))
    return min(1.0, c_eta * math.exp(math.floor(x)))


def theorem1_eta(eps: float, delta: float, T: int, t_mix: int, gamma: float,
                 n_pairs: int, c1: float = 0.5) -> float:
    """Constant rate ``c1/log(nT/delta) * min((1-gamma)^4 eps^2/gamma^2, 1/t_mix)``, capped at 1."""
    _check_targets(eps, delta, gamma)
    accuracy = (1.0 - gamma) ** 4 * eps**2 / gamma**2
    return min(1.0, c1 / math.log(n_pairs * T / delta) * min(accuracy, 1.0 / t_mix))


def theorem2_eta(eps: float, delta: float, T: int, gamma: float, n_pairs: int,
                 c1: float = 0.5) -> float:
    """Cover-time variant of :func:`theorem1_eta`: the mixing branch becomes 1."""
    _check_targets(eps, delta, gamma)
    accuracy = (1.0 - gamma) ** 4 * eps**2 / gamma**2
    return min(1.0, c1 / math.log(n_pairs * T / delta) * min(accuracy, 1.0))


def _check_targets(eps, delta, gamma):
    if not 0.0 < eps <= 1.0 / (1.0 - gamma):
        raise UsageError("eps must lie in (0, 1/(1-gamma)]")
    if not 0.0 < delta < 1.0:
        raise UsageError("delta must lie in (0, 1)")


@dataclass
class LearnerState:
    """Iterate ``Q_t`` with the schedule bookkeeping.

    For non-adaptive schedules ``snapshot`` is the very same array as ``q``.
    """

    q: np.ndarray
    snapshot: np.ndarray
    counter: VisitCounter
    mu_hat: float
    t: int = 0
    last_eta: float = math.nan

    @classmethod
    def initial(cls, n_pairs: int, adaptive: bool, q0=None) -> LearnerState:
        q = np.zeros(n_pairs) if q0 is None else np.array(q0, dtype=float)
        snapshot = q.copy() if adaptive else q
        return cls(q, snapshot, VisitCounter.zeros(n_pairs), 1.0 / n_pairs)


def _check_rate(eta):
    if not 0.0 < eta <= 1.0:
        raise RuntimeError(f"schedule produced learning rate {eta!r} outside (0, 1]")


def q_step(state: LearnerState, transition: Transition, schedule, gamma: float,
           n_actions: int) -> LearnerState:
    """Apply one asynchronous Q-learning update in place and return ``state``."""
    s, a, r, s_next = transition
    n_pairs = state.q.size
    n_states = n_pairs // n_actions
    if not (0 <= s < n_states and 0 <= a < n_actions and 0 <= s_next < n_states):
        raise UsageError(f"transition {tuple(transition)} out of range")
    idx = s * n_actions + a
    state.counter.record(idx)
    t = state.t + 1
    if isinstance(schedule, Adaptive):
        state.mu_hat = adaptive_mu_update(state.mu_hat, state.counter.min_count, t, n_pairs)
        eta = 1.0 if t < 2 else adaptive_eta(t, state.mu_hat, gamma, schedule.c_eta)
        if t >= 2 and eta != state.last_eta:
            state.snapshot[:] = state.q
    else:
        eta = float(schedule.rates(np.array([t]))[0])
    _check_rate(eta)
    best = state.q[s_next * n_actions:(s_next + 1) * n_actions].max()
    state.q[idx] = (1.0 - eta) * state.q[idx] + eta * (r + gamma * best)
    state.t = t
    state.last_eta = eta
    return state


def _block_rates(schedule, state: LearnerState, pairs: np.ndarray, gamma: float):
    n = pairs.size
    refresh = np.zeros(n, dtype=np.bool_)
    if isinstance(schedule, Adaptive):
        etas = np.empty(n)
        state.mu_hat, state.last_eta = _kernels.adaptive_rates(
            pairs, state.counter.counts, state.t, state.mu_hat, state.last_eta, gamma,
            schedule.c_eta, etas, refresh)
        state.counter.t += n
    else:
        etas = schedule.rates(np.arange(state.t + 1, state.t + n + 1))
        state.counter.record_many(pairs)
        state.last_eta = float(etas[-1])
    if etas.min() <= 0.0 or etas.max() > 1.0:
        bad = etas[(etas <= 0.0) | (etas > 1.0)][0]
        _check_rate(bad)
    return etas, refresh


def _drive(mdp, behavior, schedule, T, rng_seed, record_every, q_star, initial_state, apply):
    if T < 1:
        raise UsageError("T must be at least 1")
    if record_every < 1:
        raise UsageError("record_every must be at least 1")
    adaptive = isinstance(schedule, Adaptive)
    sampler = TrajectorySampler(mdp, behavior, rng_seed, initial_state)
    state = LearnerState.initial(mdp.n_pairs, adaptive)
    if q_star is None:
        q_star = value_iteration(mdp, tol=1e-10)
    rec_t, rec_err, rec_eta, rec_snap = [], [], [], []
    while state.t < T:
        n = min(BLOCK, T - state.t)
        blk = sampler.sample(n)
        start_t = state.t
        etas, refresh = _block_rates(schedule, state, blk.s * mdp.n_actions + blk.a, mdp.discount)
        pos = 0
        while pos < n:
            t_now = start_t + pos
            end = min(n, pos + record_every - t_now % record_every)
            apply(state, blk, slice(pos, end), etas, refresh)
            pos = end
            t_now = start_t + pos
            if t_now % record_every == 0 or t_now == T:
                rec_t.append(t_now)
                rec_err.append(np.abs(state.q - q_star).max())
                rec_eta.append(etas[pos - 1])
                if adaptive:
                    rec_snap.append(np.abs(state.snapshot - q_star).max())
        state.t = start_t + n
    metadata = {
        "seed": int(rng_seed),
        "schedule": schedule_params(schedule),
        "T": int(T),
        "gamma": mdp.discount,
        "rng": RNG_ALGORITHM,
        "record_every": int(record_every),
        "initial_state": int(initial_state),
    }
    trace = RunTrace(np.array(rec_t, dtype=np.int64), np.array(rec_err), np.array(rec_eta),
                     np.array(rec_snap) if adaptive else None, metadata)
    return state, trace


def run_qlearning(mdp: TabularMdp, behavior: Policy, schedule, T: int, rng_seed: int,
                  record_every: int = 1, *, q_star=None, initial_state: int = 0):
    """Run ``T`` asynchronous Q-learning steps from ``Q_0 = 0``.

    Returns the final :class:`LearnerState` and a :class:`RunTrace` holding
    ``||Q_t - Q*||_inf`` every ``record_every`` steps (and at ``T``).
    """
    n_actions = mdp.n_actions

    def apply(state, blk, sl, etas, refresh):
        _kernels.q_updates(state.q, n_actions, blk.s[sl], blk.a[sl], blk.s_next[sl],
                           mdp.flat_reward, mdp.discount, etas[sl], refresh[sl], state.snapshot)

    return _drive(mdp, behavior, schedule, T, rng_seed, record_every, q_star, initial_state, apply)


def run_td(mrp: TabularMdp, schedule, T: int, rng_seed: int, record_every: int = 1,
           *, v_true=None, initial_state: int = 0):
    """TD learning on a single-action MDP; returns ``(V_T, trace)``."""
    if mrp.n_actions != 1:
        raise UsageError("TD learning needs a single-action MDP")

    def apply(state, blk, sl, etas, refresh):
        _kernels.td_updates(state.q, blk.s[sl], blk.s_next[sl], mrp.flat_reward, mrp.discount,
                            etas[sl], refresh[sl], state.snapshot)

    behavior = Policy.uniform(mrp.n_states, 1)
    state, trace = _drive(mrp, behavior, schedule, T, rng_seed, record_every, v_true,
                          initial_state, apply)
    return state.q, trace
