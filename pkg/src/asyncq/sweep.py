"""Single experiment runs and the seed-by-grid sweep harness."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chain import (COVER_EXACT_MAX_STATES, build_example_chain, chain_report_row,
                    cover_time_exact, cover_time_mc, induce_chain, mixing_time)
from .config import ExperimentConfig
from .diagnostics import compute_diagnostics, error_floor, fit_blockwise_decay
from .errors import UsageError
from .mdp import Policy, value_iteration
from .qlearning import (Adaptive, Constant, Linear, Polynomial, RescaledLinear, run_qlearning,
                        run_td, theorem1_eta, theorem2_eta)
from .trace import write_metadata
from .vrq import VrConfig, run_vrq, vrq_params

RESULT_COLUMNS = ["seed", "final_error", "floor", "decay_factor", "samples", "status"]


@dataclass
class Environment:
    """An MDP with the uniform behavior policy and its induced chain."""

    mdp: object
    env_id: str
    behavior: Policy
    chain: object
    q_star: np.ndarray
    _t_mix: int | None = None

    @classmethod
    def from_config(cls, cfg: ExperimentConfig, gamma=None) -> Environment:
        mdp, env_id = cfg.build_environment(gamma)
        behavior = Policy.uniform(mdp.n_states, mdp.n_actions)
        source = cfg.environment_source()
        if source[0] == "example":
            chain = build_example_chain(*source[1:])
        else:
            chain = induce_chain(mdp, behavior)
        return cls(mdp, env_id, behavior, chain, value_iteration(mdp, tol=1e-10))

    @property
    def t_mix(self) -> int:
        if self._t_mix is None:
            self._t_mix = mixing_time(self.chain)
        return self._t_mix


def build_schedule(p: dict, env: Environment):
    name = p["schedule"]
    if name == "constant":
        return Constant(p["eta"])
    if name == "linear":
        return Linear()
    if name == "polynomial":
        return Polynomial(p["omega"])
    if name == "adaptive":
        return Adaptive(p["c_eta"])
    if name == "rescaled":
        return RescaledLinear.from_chain(env.chain.mu_min, env.mdp.discount, env.t_mix, p["c"])
    n_pairs = env.mdp.n_pairs
    if name == "mixing":
        return Constant(theorem1_eta(p["epsilon"], p["delta"], p["T"], env.t_mix,
                                     env.mdp.discount, n_pairs, p["c1"]))
    return Constant(theorem2_eta(p["epsilon"], p["delta"], p["T"], env.mdp.discount, n_pairs,
                                 p["c1"]))


def build_vr_config(p: dict, env: Environment) -> VrConfig:
    if p["vr_params"] == "explicit":
        return VrConfig(p["M"], p["N"], p["t_epoch"], p["vr_eta"])
    return vrq_params(p["epsilon"], p["delta"], env.mdp.discount, env.chain.mu_min, env.t_mix,
                      env.mdp.n_pairs, p["vr_c0"], p["vr_c1"], p["vr_c2"], p["vr_c3"])


@dataclass
class RunResult:
    trace: object
    final_error: float
    floor: float
    decay_factor: float
    samples: int
    metadata: dict = field(default_factory=dict)


def run_experiment(p: dict, seed: int, env: Environment) -> RunResult:
    """One run of ``p["algorithm"]`` with every key of ``p`` resolved to a scalar."""
    algo = p["algorithm"]
    if algo == "vrq":
        config = build_vr_config(p, env)
        _, trace = run_vrq(env.mdp, env.behavior, config, seed, 1,
                           q_star=env.q_star, initial_state=p["initial_state"])
        err = trace.linf_error
        factor = math.nan
        if len(err) > 2 and err[1] > 0:
            factor = (err[-1] / err[1]) ** (1.0 / (trace.epoch[-1] - 1))
        result = RunResult(trace, float(err[-1]), _tail_mean(err[1:]), factor, config.samples)
    elif algo in ("qlearn", "td"):
        schedule = build_schedule(p, env)
        if algo == "td":
            _, trace = run_td(env.mdp, schedule, p["T"], seed, p["record_every"],
                              v_true=env.q_star, initial_state=p["initial_state"])
        else:
            _, trace = run_qlearning(env.mdp, env.behavior, schedule, p["T"], seed,
                                     p["record_every"], q_star=env.q_star,
                                     initial_state=p["initial_state"])
        factor = math.nan
        if isinstance(schedule, Constant) and schedule.eta < 1.0:
            diag = compute_diagnostics(env.chain, schedule.eta, env.mdp.discount, p["T"],
                                       p["delta"], p["epsilon"], t_mix=env.t_mix)
            try:
                factor = fit_blockwise_decay(trace, diag).factor
            except UsageError:
                pass
        result = RunResult(trace, float(trace.linf_error[-1]), error_floor(trace), factor, p["T"])
    else:
        raise UsageError(f"algorithm {algo!r} is not a learning run")
    result.metadata = dict(trace.metadata, environment=env.env_id, algorithm=algo)
    trace.metadata = result.metadata
    return result


def _tail_mean(err) -> float:
    if len(err) == 0:
        return math.nan
    k = max(1, math.ceil(0.1 * len(err)))
    return float(np.mean(err[-k:]))


def write_run(result: RunResult, out_dir, stem: str) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{stem}.csv"
    result.trace.to_csv(path)
    write_metadata(out_dir / f"{stem}.meta.json", result.metadata)
    return path


def diagnose_rows(cfg: ExperimentConfig, n_trajectories=None, seed=None) -> list:
    """Chain diagnostics for the behavior-induced chain of the configured environment.

    The cover time is exact on small chains and a Monte Carlo estimate otherwise.
    """
    env = Environment.from_config(cfg)
    chain = env.chain
    t_mix = mixing_time(chain)
    if chain.n <= COVER_EXACT_MAX_STATES:
        t_cover, half = cover_time_exact(chain), 0
    else:
        est = cover_time_mc(chain, n_trajectories or cfg.get("n_trajectories"),
                            cfg.get("seeds")[0] if seed is None else seed)
        t_cover, half = est.estimate, est.halfwidth
    return [chain_report_row(chain, t_mix, t_cover, half)]


def _format(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def _run_one(job):
    cfg, params, seed, out_dir = job
    point = cfg.point(params)
    try:
        env = Environment.from_config(cfg, point["gamma"])
        result = run_experiment(point, seed, env)
        if out_dir is not None:
            tag = "_".join(f"{k}{_format(v)}" for k, v in params.items())
            write_run(result, Path(out_dir) / "runs", f"{tag}_seed{seed}" if tag else f"seed{seed}")
        return [result.final_error, result.floor, result.decay_factor, result.samples, "ok"]
    except Exception as exc:  # a failed run becomes a row, never aborts the sweep
        reason = f"failed: {type(exc).__name__}: {exc}".replace("\n", " ")
        return [math.nan, math.nan, math.nan, "", reason]


def sweep(cfg: ExperimentConfig, out_dir=None, workers: int | None = None):
    """Run every grid point for every seed.

    Returns ``(header, rows)``; with ``out_dir`` set, per-run traces land in
    ``out_dir/runs`` and the summary in ``out_dir/summary.csv``. Runs are
    independent and keyed by their own seed, so parallel fan-out changes no
    stream.
    """
    keys = cfg.grid_keys()
    jobs = [(cfg, params, seed, out_dir) for params in cfg.grid() for seed in cfg.get("seeds")]
    workers = cfg.get("workers") if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            outcomes = list(pool.map(_run_one, jobs))
    else:
        outcomes = [_run_one(job) for job in jobs]
    header = keys + RESULT_COLUMNS
    rows = [[params[k] for k in keys] + [seed] + outcome
            for (_, params, seed, _), outcome in zip(jobs, outcomes)]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "summary.csv").write_text(summary_csv(header, rows), encoding="utf-8")
    return header, rows


def summary_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format(x) for x in row])
    return buf.getvalue()
