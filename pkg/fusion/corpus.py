"""
Seeded benchmark corpora and the per-entry work `bench` runs.

Entry functions only touch the numerical modules so they can run in worker
processes without a configured Django.
"""

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .approx import derandomize, greedy, local_search, sample_from_relaxation
from .exact import BRUTE_FORCE_LIMIT, BnbConfig, brute_force, solve_bnb
from .exceptions import InsufficientSupport
from .instance import DdfInstance, gen_random
from .relax import compute_bounds

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CorpusEntry:
    seed: int
    d: int
    n: int
    s: int

    def build(self) -> DdfInstance:
        return gen_random(self.d, self.n, self.s, self.seed)


def make_corpus(count: int, d: int, n: int, s: int | None = None, base_seed: int = 0) -> list[CorpusEntry]:
    """
    `count` random instances with seeds base_seed, base_seed + 1, ...; when s
    is not given each entry draws it from 1..n-1 with its own seed.
    """
    entries = []
    for i in range(count):
        seed = base_seed + i
        budget = s if s is not None else int(np.random.default_rng(seed).integers(1, n))
        entries.append(CorpusEntry(seed=seed, d=d, n=n, s=budget))
    return entries


def solve_entry(entry: CorpusEntry, config: BnbConfig) -> dict:
    inst = entry.build()
    result = solve_bnb(inst, config)
    counts = result.cut_counts
    return {
        "seed": entry.seed,
        "d": entry.d,
        "n": entry.n,
        "s": entry.s,
        "status": result.status,
        "objective": result.incumbent.objective,
        "bound": result.global_bound,
        "mip_gap": result.mip_gap,
        "nodes": result.nodes_explored,
        "a": counts.get("a", 0),
        "b": counts.get("b", 0),
        "c": counts.get("c", 0),
        "d_cuts": counts.get("d", 0),
        "e": counts.get("e", 0),
        "fixed_one": result.fixed_to_one,
        "fixed_zero": result.fixed_to_zero,
        "time": result.wall_time,
    }


def approx_entry(entry: CorpusEntry, config: BnbConfig) -> dict:
    """
    Relaxation bounds and every approximation on one entry. Gaps are taken
    against the brute-force optimum when enumeration is small enough, else
    against the best certified bound.
    """
    started = time.monotonic()
    inst = entry.build()
    bounds = compute_bounds(inst, iters=config.fw_root_iters, tol=config.fw_tol)
    if math.comb(inst.n, inst.s) <= BRUTE_FORCE_LIMIT:
        optimum = brute_force(inst).objective
        reference = optimum
    else:
        optimum = None
        reference = bounds.best
    side = "M" if inst.s <= inst.n / 2 or "Mc" not in bounds.points else "Mc"
    point = bounds.points[side]
    values = {
        "local": local_search(inst, refresh=config.sm_refresh).objective,
        "greedy": greedy(inst, refresh=config.sm_refresh).objective,
    }
    try:
        values["sampling"] = sample_from_relaxation(inst, point, np.random.default_rng(entry.seed)).objective
        values["derand"] = derandomize(inst, point.x, point.formulation).objective
    except InsufficientSupport as exc:
        logger.warning("entry %d: %s", entry.seed, exc)
        values["sampling"] = values["derand"] = None
    row = {
        "seed": entry.seed,
        "d": entry.d,
        "n": entry.n,
        "s": entry.s,
        "zR": bounds.zR,
        "zM": bounds.zM,
        "zMc": bounds.zMc,
        "optimum": optimum,
        **values,
    }
    for name, value in values.items():
        row[f"{name}_gap"] = None if value is None else reference - value
    logger.debug("approx entry %d done in %.2fs", entry.seed, time.monotonic() - started)
    return row
