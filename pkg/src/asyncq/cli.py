"""Command-line entry point.

Exit status is 0 on success, 1 on a usage error and 2 on a runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .chain import CHAIN_REPORT_COLUMNS, build_example_chain, example_kernel, example_mu_min
from .config import ExperimentConfig, describe_keys
from .errors import UsageError
from .mdp import greedy_policy, load_mdp, policy_evaluation_exact, value_iteration
from .sweep import Environment, diagnose_rows, run_experiment, summary_csv, sweep, write_run


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asyncq", description="Asynchronous Q-learning experiments.",
                     epilog="config keys:\n" + describe_keys(),
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="print Q* of an MDP file")
    p.add_argument("mdp", help="MDP text file")
    p.add_argument("--tol", type=float, default=1e-10)

    p = sub.add_parser("diagnose", help="chain diagnostics CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="Monte Carlo cover-time seed")
    p.add_argument("--out", help="write the CSV here instead of stdout")

    for name in ("qlearn", "td", "vrq"):
        p = sub.add_parser(name, help=f"run {name} from a config")
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, help="override the config's seeds")
        p.add_argument("--out", help="override the output directory")

    p = sub.add_parser("sweep", help="run the seed x grid cross product")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("example-chain", help="print the example chain and its occupancy")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    return parser


def _solve(args, out):
    mdp = load_mdp(args.mdp)
    q = value_iteration(mdp, tol=args.tol)
    # exact evaluation of the greedy policy removes the iteration's residual
    q = policy_evaluation_exact(mdp, greedy_policy(q, mdp.n_actions))
    q = q.reshape(mdp.n_states, mdp.n_actions)
    for s in range(mdp.n_states):
        out.write(" ".join(repr(float(x)) for x in q[s]) + "\n")


def _diagnose(args, out):
    cfg = ExperimentConfig.load(args.config)
    rows = diagnose_rows(cfg, seed=args.seed)
    text = summary_csv(CHAIN_REPORT_COLUMNS, [[r[c] for c in CHAIN_REPORT_COLUMNS] for r in rows])
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        out.write(text)


def _run(args, out):
    cfg = ExperimentConfig.load(args.config)
    seeds = [args.seed] if args.seed is not None else cfg.get("seeds")
    if cfg.grid_keys():
        raise UsageError("config has list-valued keys " + ", ".join(cfg.grid_keys())
                         + "; use the sweep subcommand")
    point = cfg.point({})
    point["algorithm"] = args.command
    out_dir = Path(args.out or cfg.get("out"))
    env = Environment.from_config(cfg)
    for seed in seeds:
        result = run_experiment(point, seed, env)
        path = write_run(result, out_dir, f"{args.command}_seed{seed}")
        out.write(f"{path} final_error={result.final_error!r}\n")


def _sweep(args, out):
    cfg = ExperimentConfig.load(args.config)
    out_dir = Path(args.out or cfg.get("out"))
    header, rows = sweep(cfg, out_dir, args.workers)
    failed = sum(1 for r in rows if r[-1] != "ok")
    out.write(f"{out_dir / 'summary.csv'} rows={len(rows)} failed={failed}\n")


def _example_chain(args, out):
    chain = build_example_chain(args.n, args.k, args.q)
    writer = csv.writer(out, lineterminator="\n")
    for row in example_kernel(args.n, args.k, args.q):
        writer.writerow([repr(float(x)) for x in row])
    analytic = example_mu_min(args.n, args.k)
    numeric = float(chain.stationary.min())
    out.write(f"mu_min={analytic!r} lambda2={chain.lambda2_analytic!r}\n")
    out.write(f"mu_min_numeric={numeric!r} abs_diff={abs(numeric - analytic):.3e}\n")
    gap = np.abs(chain.stationary - chain.analytic_stationary).max()
    out.write(f"stationary_max_abs_diff={gap:.3e}\n")


COMMANDS = {"solve": _solve, "diagnose": _diagnose, "qlearn": _run, "td": _run, "vrq": _run,
            "sweep": _sweep, "example-chain": _example_chain}


def cli_main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args, out)
    except (UsageError, FileNotFoundError) as exc:
        print(f"asyncq: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"asyncq: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
