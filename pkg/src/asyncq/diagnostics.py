"""Frame-based decay diagnostics for constant-rate Q-learning runs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import (COVER_EXACT_MAX_STATES, StateActionChain, cover_time_exact, mixing_time)
from .errors import UsageError
from .trace import RunTrace

OCCUPANCY_CONSTANT = 443
FLOOR_FRACTION = 0.1
ABOVE_FLOOR = 3.0
MIN_FRAMES = 5


def frame_length(t_mix, mu_min, n_pairs, T, delta) -> float:
    return OCCUPANCY_CONSTANT * t_mix / mu_min * math.log(4 * n_pairs * T / delta)


def threshold_time(eta, mu_min, gamma, eps, t_frame) -> float:
    return max(2.0 * math.log(1.0 / ((1.0 - gamma) ** 2 * eps)) / (eta * mu_min), t_frame)


def frame_decay_rate(eta, gamma, mu_frame) -> float:
    """``(1 - gamma) * (1 - (1 - eta) ** mu_frame)``."""
    return (1.0 - gamma) * (1.0 - (1.0 - eta) ** mu_frame)


@dataclass(frozen=True)
class DiagnosticsConfig:
    eta: float
    gamma: float
    T: int
    delta: float
    eps: float
    n_pairs: int
    mu_min: float
    t_mix: int
    t_frame: float
    t_th: float
    mu_frame: float
    rho: float
    t_cover: int | None = None
    t_cover_all: float | None = None


def compute_diagnostics(chain: StateActionChain, eta: float, gamma: float, T: int,
                        delta: float, eps: float, *, t_mix: int | None = None,
                        t_cover: int | None = None) -> DiagnosticsConfig:
    """Frame length, threshold time and per-frame decay rate for a run.

    ``t_mix`` is computed exactly when not supplied; ``t_cover`` too, for
    chains small enough for the exact cover-time recursion.
    """
    if not 0.0 < eta < 1.0:
        raise UsageError("eta must lie in (0, 1)")
    if not 0.0 < delta < 1.0 or eps <= 0 or T < 1:
        raise UsageError("need 0 < delta < 1, eps > 0 and T >= 1")
    if t_mix is None:
        t_mix = mixing_time(chain)
    if t_cover is None and chain.n <= COVER_EXACT_MAX_STATES:
        t_cover = cover_time_exact(chain)
    mu_min = chain.mu_min
    t_frame = frame_length(t_mix, mu_min, chain.n, T, delta)
    t_th = threshold_time(eta, mu_min, gamma, eps, t_frame)
    mu_frame = 0.5 * mu_min * t_frame
    rho = frame_decay_rate(eta, gamma, mu_frame)
    t_cover_all = None if t_cover is None else t_cover * math.log(T / delta)
    return DiagnosticsConfig(eta, gamma, T, delta, eps, chain.n, mu_min, t_mix, t_frame, t_th,
                             mu_frame, rho, t_cover, t_cover_all)


@dataclass(frozen=True)
class DecayFit:
    factor: float
    floor: float
    frame_errors: np.ndarray
    n_ratios: int


def error_floor(trace: RunTrace) -> float:
    """Mean recorded error over the final 10% of the trace."""
    n = len(trace)
    if n == 0:
        raise UsageError("empty trace")
    k = max(1, math.ceil(FLOOR_FRACTION * n))
    return float(np.mean(trace.linf_error[-k:]))


def fit_blockwise_decay(trace: RunTrace, diag: DiagnosticsConfig) -> DecayFit:
    """Per-frame decay factor past ``diag.t_th`` and tail error floor.

    Frame ``j`` holds the records with ``floor((t - t_th) / t_frame) == j``;
    its error is the maximum inside. The factor is the geometric mean of
    successive frame ratios over frames whose error exceeds three times the
    floor, and 1 when no frame does.

    Raises:
        UsageError: if fewer than five complete frames follow ``t_th``.
    """
    t_th, t_frame = diag.t_th, diag.t_frame
    t = np.asarray(trace.t, dtype=float)
    err = np.asarray(trace.linf_error, dtype=float)
    floor = error_floor(trace)
    n_frames = int(math.floor((t[-1] - t_th) / t_frame)) if t[-1] > t_th else 0
    if n_frames < MIN_FRAMES:
        raise UsageError(f"trace covers {n_frames} complete frames past t_th; need {MIN_FRAMES}")
    past = t >= t_th
    frame_id = np.floor((t[past] - t_th) / t_frame).astype(np.int64)
    keep = frame_id < n_frames
    frame_errors = np.full(n_frames, np.nan)
    np.fmax.at(frame_errors, frame_id[keep], err[past][keep])
    logs = []
    for j in range(n_frames - 1):
        a, b = frame_errors[j], frame_errors[j + 1]
        if not (a > ABOVE_FLOOR * floor) or np.isnan(b):
            break
        logs.append(math.log(b / a))
    factor = math.exp(sum(logs) / len(logs)) if logs else 1.0
    return DecayFit(factor, floor, frame_errors, len(logs))


def predicted_floor(gamma, eta, n_pairs, T, delta, v_star_norm, c=1.0) -> float:
    """``c * gamma / (1-gamma) * ||V*|| * sqrt(eta * log(nT/delta))``."""
    return c * gamma / (1.0 - gamma) * v_star_norm * math.sqrt(eta * math.log(n_pairs * T / delta))
