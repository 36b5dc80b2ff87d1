"""Flat ``key = value`` experiment configuration.

Lines are ``key = value``; ``#`` starts a comment. Numeric sweep keys accept
comma-separated lists, which :meth:`ExperimentConfig.grid` expands into a
cross product. ``KEYS`` documents every accepted key.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

from .chain import example_chain_mdp
from .errors import UsageError
from .mdp import TabularMdp, load_mdp, random_mdp


class ConfigError(UsageError):
    pass


ALGORITHMS = ("qlearn", "td", "vrq", "diagnose")
SCHEDULES = ("constant", "linear", "polynomial", "rescaled", "adaptive", "mixing", "cover")

# key: (type, default, sweepable, description)
KEYS = {
    "environment": (str, "example 4 1 0.5",
                    False, "'file PATH', 'example N K Q' or 'random STATES ACTIONS SEED'"),
    "gamma": (float, 0.9, True, "discount for example/random environments"),
    "algorithm": (str, "qlearn", False, "one of " + ", ".join(ALGORITHMS)),
    "schedule": (str, "constant", False, "one of " + ", ".join(SCHEDULES)),
    "eta": (float, 0.01, True, "constant learning rate"),
    "omega": (float, 0.8, True, "polynomial exponent in (1/2, 1)"),
    "c": (float, 1.0, True, "rescaled-linear constant"),
    "c_eta": (float, 1.0, True, "adaptive schedule constant"),
    "c1": (float, 0.5, True, "constant of the mixing/cover constant-rate recipes"),
    "epsilon": (float, 0.1, True, "target accuracy for recipes and diagnostics"),
    "delta": (float, 0.1, True, "failure probability for recipes and diagnostics"),
    "T": (int, 100_000, True, "number of Q-learning / TD steps"),
    "record_every": (int, 1000, False, "trace recording period in steps; vrq records every epoch"),
    "seeds": (int, [0], False, "comma-separated list of run seeds"),
    "initial_state": (int, 0, False, "state the trajectory starts from"),
    "vr_params": (str, "recipe", False, "'recipe' (derive M, N, t_epoch, eta) or 'explicit'"),
    "M": (int, 5, True, "epochs (explicit vr_params)"),
    "N": (int, 10_000, True, "recentering samples per epoch (explicit vr_params)"),
    "t_epoch": (int, 10_000, True, "updates per epoch (explicit vr_params)"),
    "vr_eta": (float, 0.01, True, "within-epoch learning rate (explicit vr_params)"),
    "vr_c0": (float, 1.0, True, "recipe constant for the VR learning rate"),
    "vr_c1": (float, 1.0, True, "recipe constant for N"),
    "vr_c2": (float, 1.0, True, "recipe constant for t_epoch"),
    "vr_c3": (float, 1.0, True, "recipe constant for M"),
    "n_trajectories": (int, 5000, False, "Monte Carlo cover-time trajectories (diagnose)"),
    "workers": (int, 1, False, "parallel sweep workers"),
    "out": (str, "runs", False, "output directory"),
}


def _convert(key, raw):
    kind = KEYS[key][0]
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None


@dataclass
class ExperimentConfig:
    """Parsed configuration; ``values`` maps keys to lists of typed values."""

    values: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path)

    @classmethod
    def parse(cls, text: str, base_dir=".") -> ExperimentConfig:
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (part.strip() for part in line.partition("="))
            if not sep:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            if key not in KEYS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            kind, _, sweepable, _ = KEYS[key]
            if kind is str:
                values[key] = [value]
                continue
            items = [v.strip() for v in value.split(",") if v.strip()] if value else []
            if len(items) > 1 and not (sweepable or key == "seeds"):
                raise ConfigError(f"line {lineno}: {key!r} does not accept a list")
            if not items and key != "seeds":
                raise ConfigError(f"line {lineno}: {key!r} needs a value")
            values[key] = [_convert(key, v) for v in items]
        cfg = cls(values, Path(base_dir))
        cfg._validate()
        return cfg

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.parse(text, path.parent)

    def _validate(self):
        if self.get("algorithm") not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.get('algorithm')!r}")
        if self.get("schedule") not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.get('schedule')!r}")
        if self.get("vr_params") not in ("recipe", "explicit"):
            raise ConfigError("vr_params must be 'recipe' or 'explicit'")
        self.environment_source()

    def get(self, key):
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
        if key == "seeds":
            return list(self.values.get("seeds", KEYS["seeds"][1]))
        if key in self.values:
            return self.values[key][0]
        return KEYS[key][1]

    def with_values(self, **overrides) -> ExperimentConfig:
        values = dict(self.values)
        for key, value in overrides.items():
            values[key] = list(value) if isinstance(value, (list, tuple)) else [value]
        return ExperimentConfig(values, self.base_dir)

    def grid_keys(self) -> list:
        return [k for k, v in self.values.items() if k != "seeds" and len(v) > 1]

    def grid(self) -> list:
        """Cross product of list-valued keys, in file order, as dicts."""
        keys = self.grid_keys()
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.values[k] for k in keys))]

    def point(self, params: dict) -> dict:
        """All scalar settings with ``params`` substituted for the grid keys."""
        resolved = {k: self.get(k) for k in KEYS if k != "seeds"}
        resolved.update(params)
        return resolved

    def environment_source(self):
        words = self.get("environment").split()
        kind = words[0] if words else ""
        try:
            if kind == "file" and len(words) == 2:
                return ("file", words[1])
            if kind == "example" and len(words) == 4:
                return ("example", int(words[1]), float(words[2]), float(words[3]))
            if kind == "random" and len(words) == 4:
                return ("random", int(words[1]), int(words[2]), int(words[3]))
        except ValueError:
            pass
        raise ConfigError(f"bad environment {self.get('environment')!r}; "
                          + KEYS["environment"][3])

    def build_environment(self, gamma: float | None = None) -> tuple[TabularMdp, str]:
        """The MDP and a short identifier; ``gamma`` overrides the config value."""
        source = self.environment_source()
        gamma = self.get("gamma") if gamma is None else gamma
        if source[0] == "file":
            path = Path(source[1])
            if not path.is_absolute():
                path = self.base_dir / path
            try:
                return load_mdp(path), f"file:{source[1]}"
            except OSError as exc:
                raise ConfigError(f"cannot read MDP file {path}: {exc.strerror}") from None
        if source[0] == "example":
            _, n, k, q = source
            return example_chain_mdp(n, k, q, gamma), f"example:{n}:{k!r}:{q!r}"
        _, states, actions, seed = source
        return random_mdp(states, actions, gamma, seed), f"random:{states}:{actions}:{seed}"


def describe_keys() -> str:
    lines = []
    for key, (kind, default, sweepable, doc) in KEYS.items():
        tag = " (list ok)" if sweepable else ""
        lines.append(f"{key:15s} {kind.__name__:5s} default={default!r}{tag}: {doc}")
    return "\n".join(lines)
