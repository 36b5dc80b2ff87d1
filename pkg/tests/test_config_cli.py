"""Configuration parsing, sweeps and the command-line interface."""

import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from asyncq.cli import cli_main
from asyncq.config import KEYS, ConfigError, ExperimentConfig, describe_keys
from asyncq.mdp import format_mdp, random_mdp
from asyncq.sweep import summary_csv, sweep


def run_cli(*argv):
    out = io.StringIO()
    code = cli_main(list(argv), out=out)
    return code, out.getvalue()


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def read_summary(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_parse_comments_lists_and_defaults():
    cfg = ExperimentConfig.parse(
        "# a comment\nenvironment = random 5 3 0   # trailing\neta = 0.1, 0.025\nseeds = 1,2,3\n"
    )
    assert cfg.get("eta") == 0.1
    assert cfg.get("seeds") == [1, 2, 3]
    assert cfg.get("T") == KEYS["T"][1]
    assert cfg.grid() == [{"eta": 0.1}, {"eta": 0.025}]
    assert cfg.environment_source() == ("random", 5, 3, 0)


@pytest.mark.parametrize("text", [
    "bogus = 1\n",
    "eta = 0.1\neta = 0.2\n",
    "record_every = 1, 2\n",
    "T = ten\n",
    "no equals sign\n",
    "environment = grid 3\n",
    "algorithm = sarsa\n",
    "schedule = cosine\n",
    "eta =\n",
])
def test_invalid_configs_fail_at_load(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.parse(text)


def test_every_key_is_documented():
    table = describe_keys()
    for key, (_, _, _, doc) in KEYS.items():
        assert key in table and doc


def test_file_environment_resolves_relative_to_config(tmp_path):
    write(tmp_path / "m.mdp", format_mdp(random_mdp(2, 2, 0.8, seed=0)))
    cfg = ExperimentConfig.load(write(tmp_path / "c.cfg", "environment = file m.mdp\n"))
    mdp, env_id = cfg.build_environment()
    assert mdp.discount == 0.8 and env_id == "file:m.mdp"
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.cfg")


def test_sweep_cross_product_and_empty_seeds(tmp_path):
    cfg = ExperimentConfig.parse("environment = random 4 2 0\neta = 0.1, 0.05\nseeds = 0, 1, 2\n"
                                 "T = 2000\nrecord_every = 100\n")
    header, rows = sweep(cfg, tmp_path / "a")
    assert header == ["eta", "seed", "final_error", "floor", "decay_factor", "samples", "status"]
    assert len(rows) == 6 and all(r[-1] == "ok" for r in rows)
    assert len(list((tmp_path / "a" / "runs").glob("*.csv"))) == 6
    empty = ExperimentConfig.parse("environment = random 4 2 0\nseeds =\n")
    assert sweep(empty, tmp_path / "b")[1] == []
    assert read_summary(tmp_path / "b" / "summary.csv") == []


def test_sweep_records_failures_per_row(tmp_path):
    cfg = ExperimentConfig.parse("environment = random 4 2 0\nschedule = polynomial\n"
                                 "omega = 0.4, 0.7\nT = 1000\nseeds = 0, 1\n")
    _, rows = sweep(cfg, tmp_path)
    status = [r[-1] for r in rows]
    assert status[2:] == ["ok", "ok"]
    assert all(s.startswith("failed: UsageError") and "omega" in s for s in status[:2])
    ok = [r for r in read_summary(tmp_path / "summary.csv") if r["status"] == "ok"]
    assert len(ok) == 4 - 2


def test_parallel_sweep_matches_serial(tmp_path):
    text = "environment = random 3 2 1\neta = 0.2, 0.1\nseeds = 4, 5\nT = 3000\nrecord_every = 500\n"
    cfg = ExperimentConfig.parse(text)
    serial = sweep(cfg, tmp_path / "s", workers=1)
    parallel = sweep(cfg, tmp_path / "p", workers=2)
    assert summary_csv(*serial) == summary_csv(*parallel)
    assert (tmp_path / "s" / "summary.csv").read_bytes() == (tmp_path / "p" / "summary.csv").read_bytes()


def test_sqrt_rate_sweep_halves_the_floor(tmp_path):
    cfg = ExperimentConfig.parse("environment = example 4 1 0.5\neta = 0.004, 0.001, 0.00025\n"
                                 "seeds = 0, 1, 2\nT = 2000000\nrecord_every = 1000\n")
    _, rows = sweep(cfg)
    floors = np.array([r[3] for r in rows]).reshape(3, 3)
    ratios = np.median(floors[:-1] / floors[1:], axis=1)
    assert np.all((1.4 <= ratios) & (ratios <= 2.9))


def test_vr_sweep_reports_samples(tmp_path):
    cfg = ExperimentConfig.parse("environment = random 3 2 0\nalgorithm = vrq\nvr_params = explicit\n"
                                 "M = 3\nN = 300, 600\nt_epoch = 500\nvr_eta = 0.1\nseeds = 0\n")
    _, rows = sweep(cfg)
    assert [r[-2] for r in rows] == [2400, 3300]


def test_solve_prints_the_geometric_series(tmp_path):
    path = write(tmp_path / "one.mdp", "mdp 1 1 0.5\nr 0 0 1\np 0 0 1\n")
    assert run_cli("solve", str(path)) == (0, "2.0\n")


def test_example_chain_command():
    code, out = run_cli("example-chain", "--n", "4", "--k", "1", "--q", "0.5")
    assert code == 0
    assert "mu_min=0.25 lambda2=0.5" in out.splitlines()
    assert out.splitlines()[0] == "0.625,0.125,0.125,0.125"


@pytest.mark.parametrize("argv", [["frobnicate"], ["solve"], ["qlearn", "--config", "x", "--bogus"],
                                  ["example-chain", "--n", "four", "--k", "1", "--q", "0.5"], []])
def test_usage_errors_exit_one(argv, capsys):
    assert cli_main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_error_classes_map_to_exit_codes(tmp_path):
    assert run_cli("qlearn", "--config", str(tmp_path / "absent.cfg"))[0] == 1
    assert run_cli("example-chain", "--n", "5", "--k", "1", "--q", "0.5")[0] == 1
    td = write(tmp_path / "td.cfg", "environment = random 3 2 0\nT = 10\n")
    assert run_cli("td", "--config", str(td))[0] == 1
    # absorbing state: the behavior chain is reducible
    absorbing = "mdp 2 1 0.9\nr 0 0 0\nr 1 0 1\np 0 0 0.5 0.5\np 1 0 0 1\n"
    write(tmp_path / "abs.mdp", absorbing)
    bad = write(tmp_path / "abs.cfg", "environment = file abs.mdp\nT = 10\n")
    assert run_cli("qlearn", "--config", str(bad), "--out", str(tmp_path / "o"))[0] == 2


def test_run_commands_are_byte_identical(tmp_path):
    cfg = write(tmp_path / "q.cfg", "environment = example 4 1 0.5\neta = 0.02\nT = 30000\n"
                                    "record_every = 500\nseeds = 9\n")
    for cmd in ("qlearn", "td", "vrq"):
        outs = []
        for rep in ("a", "b"):
            code, _ = run_cli(cmd, "--config", str(cfg), "--seed", "3", "--out", str(tmp_path / rep))
            assert code == 0
            outs.append((tmp_path / rep / f"{cmd}_seed3.csv").read_bytes())
        assert outs[0] == outs[1]
    meta = json.loads((tmp_path / "a" / "qlearn_seed3.meta.json").read_text())
    assert meta["seed"] == 3 and meta["rng"] == "numpy.PCG64"
    assert meta["environment"] == "example:4:1.0:0.5"
    assert meta["schedule"] == {"variant": "Constant", "eta": 0.02}
    assert meta["T"] == 30000 and meta["gamma"] == 0.9


def test_run_command_rejects_grids(tmp_path):
    cfg = write(tmp_path / "g.cfg", "eta = 0.1, 0.2\n")
    assert run_cli("qlearn", "--config", str(cfg))[0] == 1


def test_diagnose_and_sweep_commands(tmp_path):
    cfg = write(tmp_path / "d.cfg", "environment = example 4 1 0.5\n")
    code, out = run_cli("diagnose", "--config", str(cfg))
    assert code == 0
    assert out == "n,mu_min,t_mix,t_cover,t_cover_halfwidth,lambda2_analytic\n4,0.25,2,13,0,0.5\n"
    big = write(tmp_path / "b.cfg", "environment = random 5 3 0\nn_trajectories = 500\n")
    row = run_cli("diagnose", "--config", str(big), "--seed", "1")[1].splitlines()[1].split(",")
    assert row[0] == "15" and int(row[4]) >= 0 and row[5] == ""
    sw = write(tmp_path / "s.cfg", "environment = random 3 2 0\neta = 0.1, 0.2\nT = 500\nseeds = 0\n")
    code, out = run_cli("sweep", "--config", str(sw), "--out", str(tmp_path / "sw"))
    assert code == 0 and "rows=2 failed=0" in out
    assert len(read_summary(tmp_path / "sw" / "summary.csv")) == 2


def test_docs_table_lists_every_key():
    text = (Path(__file__).resolve().parents[1] / "docs" / "configuration.md").read_text()
    for key in KEYS:
        assert f"| `{key}` |" in text
