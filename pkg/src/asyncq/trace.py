"""Run traces and their CSV / metadata serialization."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TRACE_COLUMNS = ["t", "linf_error", "eta", "snapshot_error"]
EPOCH_COLUMNS = ["epoch", "linf_error", "unvisited_pairs", "samples_consumed"]


def _fmt(x) -> str:
    return format(float(x), ".17g")


@dataclass
class RunTrace:
    """Time-stamped l-infinity errors of one learning run.

    ``snapshot_error`` is ``None`` for non-adaptive schedules.
    """

    t: np.ndarray
    linf_error: np.ndarray
    eta: np.ndarray
    snapshot_error: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for i in range(len(self.t)):
            snap = "" if self.snapshot_error is None else _fmt(self.snapshot_error[i])
            writer.writerow([int(self.t[i]), _fmt(self.linf_error[i]), _fmt(self.eta[i]), snap])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        Path(path).write_text(self.csv_text(), encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> RunTrace:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        snap = None
        if rows and rows[0]["snapshot_error"] != "":
            snap = np.array([float(r["snapshot_error"]) for r in rows])
        return cls(np.array([int(r["t"]) for r in rows], dtype=np.int64),
                   np.array([float(r["linf_error"]) for r in rows]),
                   np.array([float(r["eta"]) for r in rows]), snap)


@dataclass
class EpochTrace:
    """Per-epoch errors of a variance-reduced run; row 0 is the initial table."""

    epoch: np.ndarray
    linf_error: np.ndarray
    unvisited_pairs: np.ndarray
    samples_consumed: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.epoch)

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(EPOCH_COLUMNS)
        for i in range(len(self.epoch)):
            writer.writerow([int(self.epoch[i]), _fmt(self.linf_error[i]),
                             int(self.unvisited_pairs[i]), int(self.samples_consumed[i])])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        Path(path).write_text(self.csv_text(), encoding="utf-8")


def write_metadata(path, metadata: dict) -> None:
    Path(path).write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")
