"""Finite discounted MDPs, exact Bellman operators and oracle solvers.

Q-tables are flat numpy vectors of length ``n_states * n_actions`` indexed
row-major, ``index = s * n_actions + a``. Value tables are vectors of length
``n_states``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, UsageError

ROW_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP ``(S, A, P, r, gamma)`` with deterministic rewards in [0, 1].

    ``transition`` has shape ``(S, A, S)`` and ``reward`` shape ``(S, A)``.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float

    def __post_init__(self):
        p = np.array(self.transition, dtype=float)
        r = np.array(self.reward, dtype=float)
        if p.ndim != 3 or p.shape[0] != p.shape[2] or p.shape[0] < 1 or p.shape[1] < 1:
            raise UsageError(f"transition must have shape (S, A, S), got {p.shape}")
        if r.shape != p.shape[:2]:
            raise UsageError(f"reward must have shape {p.shape[:2]}, got {r.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise UsageError("transition probabilities must be finite and nonnegative")
        row_err = np.abs(p.sum(axis=2) - 1.0).max()
        if row_err > ROW_TOL:
            raise UsageError(f"transition rows must sum to 1 (max deviation {row_err:.3g})")
        if not np.all(np.isfinite(r)) or r.min() < 0.0 or r.max() > 1.0:
            raise UsageError("rewards must lie in [0, 1]")
        if not 0.0 < self.discount < 1.0:
            raise UsageError(f"discount must lie in (0, 1), got {self.discount}")
        p.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_pairs(self) -> int:
        return self.n_states * self.n_actions

    @property
    def flat_transition(self) -> np.ndarray:
        """``P`` as an ``(S*A, S)`` matrix."""
        return self.transition.reshape(self.n_pairs, self.n_states)

    @property
    def flat_reward(self) -> np.ndarray:
        return self.reward.reshape(self.n_pairs)

    def index(self, s: int, a: int) -> int:
        return s * self.n_actions + a


@dataclass(frozen=True, eq=False)
class Policy:
    """Stationary policy stored as an ``(S, A)`` matrix of action probabilities.

    ``kind`` is ``"deterministic"`` when every row is one-hot and was built from
    an action map, else ``"stochastic"``.
    """

    probs: np.ndarray
    kind: str = "stochastic"

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2:
            raise UsageError("policy probabilities must be a 2-d array")
        if np.any(probs < 0) or np.abs(probs.sum(axis=1) - 1.0).max() > ROW_TOL:
            raise UsageError("policy rows must be probability vectors")
        if self.kind not in ("deterministic", "stochastic"):
            raise UsageError(f"unknown policy kind {self.kind!r}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> Policy:
        actions = np.asarray(actions, dtype=int)
        if actions.ndim != 1 or np.any(actions < 0) or np.any(actions >= n_actions):
            raise UsageError("deterministic actions out of range")
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs, kind="deterministic")

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> Policy:
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @property
    def actions(self) -> np.ndarray:
        """Chosen action per state (deterministic policies only)."""
        if self.kind != "deterministic":
            raise UsageError("actions are only defined for deterministic policies")
        return self.probs.argmax(axis=1)

    def check(self, mdp: TabularMdp) -> None:
        if self.probs.shape != (mdp.n_states, mdp.n_actions):
            raise UsageError(
                f"policy shape {self.probs.shape} does not match MDP "
                f"({mdp.n_states}, {mdp.n_actions})"
            )

    def selection_matrix(self) -> np.ndarray:
        """The ``(S, S*A)`` matrix ``Pi`` with ``Pi[s, s*A + a] = pi(a|s)``."""
        n_states, n_actions = self.probs.shape
        pi = np.zeros((n_states, n_states * n_actions))
        for s in range(n_states):
            pi[s, s * n_actions:(s + 1) * n_actions] = self.probs[s]
        return pi


def _check_q(mdp: TabularMdp, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (mdp.n_pairs,):
        raise UsageError(f"Q-table must have shape ({mdp.n_pairs},), got {q.shape}")
    return q


def greedy_values(q, n_actions: int) -> np.ndarray:
    """``V(s) = max_a Q(s, a)`` for a flat Q-table."""
    return np.asarray(q).reshape(-1, n_actions).max(axis=1)


def greedy_policy(q, n_actions: int) -> Policy:
    """Greedy policy; ties go to the lowest action index."""
    actions = np.asarray(q).reshape(-1, n_actions).argmax(axis=1)
    return Policy.deterministic(actions, n_actions)


def bellman_optimality(mdp: TabularMdp, q) -> np.ndarray:
    """Apply the Bellman optimality operator ``r + gamma * P max_a' q``."""
    q = _check_q(mdp, q)
    return mdp.flat_reward + mdp.discount * (mdp.flat_transition @ greedy_values(q, mdp.n_actions))


def default_max_iters(tol: float, gamma: float) -> int:
    return math.ceil(math.log(tol * (1.0 - gamma)) / math.log(gamma)) + 64


def value_iteration(mdp: TabularMdp, tol: float = 1e-10, max_iters: int | None = None,
                    *, return_residuals: bool = False):
    """Iterate the Bellman optimality operator from zero.

    Returns the first iterate ``Q`` with ``||T(Q) - Q||_inf <= tol``. With
    ``return_residuals`` the residual history is returned alongside.

    Raises:
        ConvergenceError: if ``max_iters`` iterations do not reach ``tol``.
    """
    if tol <= 0:
        raise UsageError("tol must be positive")
    if max_iters is None:
        max_iters = default_max_iters(tol, mdp.discount)
    q = np.zeros(mdp.n_pairs)
    residuals = []
    for _ in range(max_iters + 1):
        tq = bellman_optimality(mdp, q)
        res = float(np.abs(tq - q).max())
        residuals.append(res)
        if res <= tol:
            return (q, residuals) if return_residuals else q
        q = tq
    raise ConvergenceError(f"value iteration did not converge in {max_iters} iterations",
                           residuals[-1])


def policy_transition(mdp: TabularMdp, policy: Policy) -> np.ndarray:
    """State-action kernel ``P^pi = P Pi`` of shape ``(S*A, S*A)``."""
    policy.check(mdp)
    return mdp.flat_transition @ policy.selection_matrix()


def policy_evaluation_exact(mdp: TabularMdp, policy: Policy) -> np.ndarray:
    """Solve ``(I - gamma P^pi) Q = r`` directly."""
    p_pi = policy_transition(mdp, policy)
    return np.linalg.solve(np.eye(mdp.n_pairs) - mdp.discount * p_pi, mdp.flat_reward)


def policy_value(mdp: TabularMdp, policy: Policy) -> np.ndarray:
    """Solve ``(I - gamma P_pi) V = r_pi`` over states."""
    policy.check(mdp)
    sel = policy.selection_matrix()
    p_states = sel @ mdp.flat_transition
    r_states = sel @ mdp.flat_reward
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.discount * p_states, r_states)


def variance_vector(mdp: TabularMdp, v) -> np.ndarray:
    """Per-pair variance of ``v`` under ``P(.|s, a)``; tiny negatives clamp to 0."""
    v = np.asarray(v, dtype=float)
    if v.shape != (mdp.n_states,):
        raise UsageError(f"value table must have shape ({mdp.n_states},), got {v.shape}")
    p = mdp.flat_transition
    mean = p @ v
    # centred form: nonnegative up to summation roundoff
    var = np.einsum("ij,ij->i", p, (v[None, :] - mean[:, None]) ** 2)
    return np.maximum(var, 0.0)


def random_mdp(n_states: int, n_actions: int, gamma: float, seed: int,
               concentration: float = 1.0) -> TabularMdp:
    """Dense random MDP: Dirichlet transition rows, uniform rewards."""
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_actions))
    p /= p.sum(axis=2, keepdims=True)
    r = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    return TabularMdp(p, r, gamma)


def parse_mdp(text: str) -> TabularMdp:
    """Parse the plain-text MDP format.

    Header ``mdp S A gamma``, then ``r s a value`` lines and
    ``p s a p_0 ... p_{S-1}`` lines. ``#`` starts a comment.
    """
    header = None
    rewards = {}
    probs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        tag = line[0]
        try:
            if header is None:
                if tag != "mdp" or len(line) != 4:
                    raise UsageError("expected header 'mdp <S> <A> <gamma>'")
                header = (int(line[1]), int(line[2]), float(line[3]))
                continue
            n_states, n_actions, _ = header
            if tag == "r" and len(line) == 4:
                key = (int(line[1]), int(line[2]))
                value = float(line[3])
                target = rewards
            elif tag == "p" and len(line) == 3 + n_states:
                key = (int(line[1]), int(line[2]))
                value = [float(x) for x in line[3:]]
                target = probs
            else:
                raise UsageError(f"malformed {tag!r} line")
            if not (0 <= key[0] < n_states and 0 <= key[1] < n_actions):
                raise UsageError(f"state-action {key} out of range")
            if key in target:
                raise UsageError(f"duplicate entry for {key}")
            target[key] = value
        except (ValueError, IndexError) as exc:
            raise UsageError(f"line {lineno}: {exc}") from None
    if header is None:
        raise UsageError("missing 'mdp' header")
    n_states, n_actions, gamma = header
    if len(rewards) != n_states * n_actions or len(probs) != n_states * n_actions:
        raise UsageError("every state-action pair needs one 'r' and one 'p' line")
    p = np.empty((n_states, n_actions, n_states))
    r = np.empty((n_states, n_actions))
    for (s, a), value in rewards.items():
        r[s, a] = value
    for (s, a), row in probs.items():
        p[s, a] = row
    return TabularMdp(p, r, gamma)


def load_mdp(path) -> TabularMdp:
    return parse_mdp(Path(path).read_text(encoding="utf-8"))


def format_mdp(mdp: TabularMdp) -> str:
    lines = [f"mdp {mdp.n_states} {mdp.n_actions} {float(mdp.discount)!r}"]
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            lines.append(f"r {s} {a} {float(mdp.reward[s, a])!r}")
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            row = " ".join(repr(float(x)) for x in mdp.transition[s, a])
            lines.append(f"p {s} {a} {row}")
    return "\n".join(lines) + "\n"
