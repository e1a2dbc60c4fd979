"""Per-iteration records and their CSV/JSON persistence."""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .population import Population

CSV_COLUMNS = ("t", "best_reward", "mean_reward", "violation", "failures")


def config_hash(obj) -> str:
    """Short stable hash of a JSON-serialisable object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def atomic_write(path, data: str | bytes):
    """Write ``data`` to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


@dataclass
class IterationRecord:
    t: int
    best_reward: float
    mean_reward: float
    violation: float
    failures: int
    evaluations: int
    failed: bool = False
    population: Population | None = None
    examples: Population | None = None


@dataclass
class ExperimentTrace:
    records: list[IterationRecord] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    initial_examples: Population | None = None

    def __len__(self):
        return len(self.records)

    @property
    def config_hash(self) -> str:
        return self.metadata.get("config_hash", "")

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def best_rewards(self) -> np.ndarray:
        return self.column("best_reward")

    def example_codes(self, grid) -> np.ndarray:
        """State codes of the sampled examples for t = 0..T (grid runs only)."""
        pops = [self.initial_examples] + [r.examples for r in self.records]
        if any(p is None for p in pops):
            raise ValueError("trace was recorded without populations")
        return np.array([grid.encode(p.actions) for p in pops], dtype=np.int64)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# config_hash: {self.config_hash}\n")
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for r in self.records:
            buf.write(f"{r.t},{_num(r.best_reward)},{_num(r.mean_reward)},{_num(r.violation)},{r.failures}\n")
        return buf.getvalue()

    def to_json(self, populations=False) -> str:
        recs = []
        for r in self.records:
            d = {
                "t": r.t,
                "best_reward": _json_float(r.best_reward),
                "mean_reward": _json_float(r.mean_reward),
                "violation": _json_float(r.violation),
                "failures": r.failures,
                "evaluations": r.evaluations,
                "failed": r.failed,
            }
            if populations:
                d["population"] = _pop_json(r.population)
                d["examples"] = _pop_json(r.examples)
            recs.append(d)
        out = {"metadata": self.metadata, "records": recs}
        if populations:
            out["initial_examples"] = _pop_json(self.initial_examples)
        return json.dumps(out, indent=1, sort_keys=True) + "\n"

    def write(self, directory, stem="trace", populations=False):
        directory = os.fspath(directory)
        atomic_write(os.path.join(directory, f"{stem}.csv"), self.to_csv())
        atomic_write(os.path.join(directory, f"{stem}.json"), self.to_json(populations))


def _json_float(v):
    v = float(v)
    return None if math.isnan(v) else v


def _pop_json(pop):
    if pop is None:
        return None
    return {
        "actions": pop.actions.tolist(),
        "rewards": None if pop.rewards is None else pop.rewards.tolist(),
    }


def read_csv(path) -> tuple[str, dict[str, np.ndarray]]:
    """Return ``(config_hash, columns)`` for a trace CSV written by :meth:`ExperimentTrace.to_csv`."""
    h = ""
    rows = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                if key.strip() == "config_hash":
                    h = val.strip()
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append([float(v) for v in line.split(",")])
    if header is None:
        raise ValueError(f"{path}: no header row")
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return h, {name: data[:, i] for i, name in enumerate(header)}
