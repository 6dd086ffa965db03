"""
Run reports and their JSON / CSV writers.

Column names and keys are documented in docs/FORMATS.md; keep the two in sync.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import django
import numpy as np
import scipy

import fusionopt

VOLATILE_KEYS = ("timestamp", "timings")

BOUNDS_COLUMNS = ["s", "zR", "zM", "zMc", "lb"]
CURVES_COLUMNS = [
    "s", "local_sbar", "local_s", "sampling_sbar", "sampling_s",
    "gap_M_local", "gap_M_sampling", "gap_Mc_local", "gap_Mc_sampling",
]
BENCH_SOLVE_COLUMNS = [
    "seed", "d", "n", "s", "status", "objective", "bound", "mip_gap", "nodes",
    "a", "b", "c", "d_cuts", "e", "fixed_one", "fixed_zero", "time",
]
BENCH_APPROX_COLUMNS = [
    "seed", "d", "n", "s", "zR", "zM", "zMc", "optimum",
    "local", "greedy", "sampling", "derand", "local_gap", "greedy_gap", "sampling_gap", "derand_gap",
]


def jsonable(value):
    """Converts numpy values and sets to plain JSON types; non-finite floats become None."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, (set, frozenset)):
        return sorted(jsonable(v) for v in value)
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def versions() -> dict:
    return {
        "fusionopt": fusionopt.__version__,
        "django": django.get_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


@dataclass
class RunReport:
    """
    What a command did and what it found.

    Every number under results is reproducible from (instance, config, seed);
    only timestamp and timings vary between identical invocations. seed falls
    back to the seed the instance was generated with.
    """
    command: str
    instance: dict
    config: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        self.instance = jsonable(self.instance)
        if self.seed is None:
            self.seed = (self.instance.get("meta") or {}).get("seed")
        self.config = jsonable(self.config)
        self.results = jsonable(self.results)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "instance": self.instance,
            "seed": self.seed,
            "config": self.config,
            "results": self.results,
            "timings": jsonable(self.timings),
            "versions": versions(),
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def stable_view(doc: dict) -> dict:
    """A report document without its volatile keys."""
    return {k: v for k, v in doc.items() if k not in VOLATILE_KEYS}


def write_json(path, report: RunReport) -> None:
    Path(path).write_text(report.to_json() + "\n")


def write_csv(path_or_stream, rows, columns) -> None:
    """Writes dict rows with a header; floats keep round-trip precision."""

    def cell(value):
        value = jsonable(value)
        if value is None:
            return ""
        if isinstance(value, float):
            return repr(value)
        return value

    def dump(stream):
        writer = csv.DictWriter(stream, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: cell(row.get(k)) for k in columns})

    if hasattr(path_or_stream, "write"):
        dump(path_or_stream)
    else:
        with open(path_or_stream, "w", newline="") as fh:
            dump(fh)
