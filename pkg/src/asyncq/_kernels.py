"""Compiled inner loops for trajectory sampling and tabular updates.

Every kernel that draws randomness takes a ``numpy.random.Generator`` and
consumes it exactly as the pure-Python paths do, so streams stay identical
whichever path advanced the generator.
"""

import math

import numpy as np
from numba import njit


def cumulative_rows(probs):
    """Row-wise CDF tables for inverse-CDF sampling.

    Entries from the last positive-probability column onwards are set to 2.0,
    so a uniform in [0, 1) can never select a zero-probability tail entry
    through summation roundoff.
    """
    probs = np.asarray(probs, dtype=float)
    cum = np.cumsum(probs, axis=-1)
    flat_p = probs.reshape(-1, probs.shape[-1])
    flat_c = cum.reshape(-1, probs.shape[-1])
    for i in range(flat_p.shape[0]):
        last = np.flatnonzero(flat_p[i] > 0)[-1]
        flat_c[i, last:] = 2.0
    return np.ascontiguousarray(cum)


@njit(cache=True)
def pick(cum_row, u):
    i = 0
    while u >= cum_row[i]:
        i += 1
    return i


@njit(cache=True)
def walk_mdp(cum_policy, cum_transition, state, rng, n_steps, s_out, a_out, s_next_out):
    """Draw ``n_steps`` transitions; returns the final state.

    Each step consumes two uniforms: the action, then the next state.
    ``cum_transition`` is indexed by the flat pair.
    """
    n_actions = cum_policy.shape[1]
    for i in range(n_steps):
        a = pick(cum_policy[state], rng.random())
        nxt = pick(cum_transition[state * n_actions + a], rng.random())
        s_out[i] = state
        a_out[i] = a
        s_next_out[i] = nxt
        state = nxt
    return state


@njit(cache=True)
def walk_chain(cum_kernel, start, rng, n_steps, out):
    """Fill ``out`` with ``X_1..X_n`` where ``X_1 = start``."""
    x = start
    for i in range(n_steps):
        out[i] = x
        if i + 1 < n_steps:
            x = pick(cum_kernel[x], rng.random())


@njit(cache=True)
def cover_times(cum_kernel, start, rng, n_traj, out):
    """First time every state has been visited, time 0 included."""
    n = cum_kernel.shape[0]
    seen = np.zeros(n, dtype=np.bool_)
    for j in range(n_traj):
        seen[:] = False
        x = start
        seen[x] = True
        remaining = n - 1
        t = 0
        while remaining > 0:
            x = pick(cum_kernel[x], rng.random())
            t += 1
            if not seen[x]:
                seen[x] = True
                remaining -= 1
        out[j] = t


@njit(cache=True)
def occupancy_failures(cum_kernel, mu, t, reps, starts, rng):
    """Count reps where some state has at most ``t * mu / 2`` visits."""
    n = cum_kernel.shape[0]
    counts = np.zeros(n, dtype=np.int64)
    failures = 0
    for j in range(reps):
        counts[:] = 0
        x = starts[j]
        for i in range(t):
            counts[x] += 1
            if i + 1 < t:
                x = pick(cum_kernel[x], rng.random())
        for y in range(n):
            if counts[y] <= 0.5 * t * mu[y]:
                failures += 1
                break
    return failures


@njit(cache=True)
def adaptive_rates(pairs, counts, t0, mu_hat, last_eta, gamma, c_eta, etas, refresh):
    """Adaptive learning rates for a block of visited pairs.

    Updates ``counts`` in place and fills ``etas`` and ``refresh``;
    ``refresh[i]`` marks that the snapshot must be taken before update ``i``
    because the rate changed. Returns the final ``(mu_hat, last_eta)``.
    """
    n_pairs = counts.shape[0]
    scale = (1.0 - gamma) * gamma * gamma
    for i in range(pairs.shape[0]):
        t = t0 + i + 1
        counts[pairs[i]] += 1
        min_count = counts[0]
        for j in range(1, n_pairs):
            if counts[j] < min_count:
                min_count = counts[j]
        if min_count == 0:
            mu_hat = 1.0 / n_pairs
        else:
            freq = min_count / t
            ratio = freq / mu_hat
            if not (0.5 < ratio < 2.0):
                mu_hat = freq
        if t < 2:
            eta = 1.0
        else:
            x = math.log(math.log(t) / (mu_hat * scale * t))
            eta = min(1.0, c_eta * math.exp(math.floor(x)))
        refresh[i] = t >= 2 and eta != last_eta
        etas[i] = eta
        last_eta = eta
    return mu_hat, last_eta


@njit(cache=True)
def q_updates(q, n_actions, s, a, s_next, reward, gamma, etas, refresh, snapshot):
    for i in range(s.shape[0]):
        if refresh[i]:
            snapshot[:] = q
        base = s_next[i] * n_actions
        best = q[base]
        for b in range(1, n_actions):
            if q[base + b] > best:
                best = q[base + b]
        idx = s[i] * n_actions + a[i]
        eta = etas[i]
        q[idx] = (1.0 - eta) * q[idx] + eta * (reward[idx] + gamma * best)


@njit(cache=True)
def td_updates(v, s, s_next, reward, gamma, etas, refresh, snapshot):
    for i in range(s.shape[0]):
        if refresh[i]:
            snapshot[:] = v
        x = s[i]
        eta = etas[i]
        v[x] = (1.0 - eta) * v[x] + eta * (reward[x] + gamma * v[s_next[i]])


@njit(cache=True)
def vr_updates(q, n_actions, s, a, s_next, reward, gamma, eta, v_bar, t_bar):
    for i in range(s.shape[0]):
        base = s_next[i] * n_actions
        best = q[base]
        for b in range(1, n_actions):
            if q[base + b] > best:
                best = q[base + b]
        idx = s[i] * n_actions + a[i]
        target = (reward[idx] + gamma * best) - (reward[idx] + gamma * v_bar[s_next[i]]) + t_bar[idx]
        q[idx] = (1.0 - eta) * q[idx] + eta * target
