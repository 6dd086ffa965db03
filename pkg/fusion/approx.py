"""
Approximation algorithms: local search, greedy, product-weighted sampling with
its exact expectation, and derandomization by conditional expectations.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import linalg
from .exceptions import BadInit, InputError, InsufficientSupport
from .instance import DdfInstance, Selection
from .relax import COMPLEMENT_FORMULATIONS, BoundReport, FracPoint

logger = logging.getLogger(__name__)

SWAP_TOL = 1e-9
SUPPORT_TOL = 1e-9
METHODS = ("local", "greedy", "sample", "derand")


@dataclass
class ApproxReport:
    """
    Outcome of one approximation run.

    bound_checks holds (name, value, satisfied) triples comparing the selection
    against certified upper bounds.
    """
    method: str
    selection: Selection
    steps: int = 0
    seed: int | None = None
    bound_checks: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "selection": self.selection.as_list(),
            "objective": self.selection.objective,
            "steps": self.steps,
            "seed": self.seed,
            "bound_checks": [
                {"name": name, "value": value, "satisfied": ok} for name, value, ok in self.bound_checks
            ],
            **self.extra,
        }


# -----------------------------------------------------------------------------
# Greedy and local search
# -----------------------------------------------------------------------------

def greedy(inst: DdfInstance, refresh: int = 64) -> Selection:
    """
    Adds the point with the largest gain log(1 + b_i^T X^{-1} b_i) s times.

    Ties go to the smallest index.
    """
    tracker = linalg.InverseTracker(np.eye(inst.d), refresh=refresh)
    chosen = np.zeros(inst.n, dtype=bool)
    for _ in range(inst.s):
        W = tracker.inv @ inst.B
        gains = np.log1p(np.sum(inst.B * W, axis=0))
        gains[chosen] = -np.inf
        j = int(np.argmax(gains))
        chosen[j] = True
        tracker.update(inst.B[:, j], +1)
    return inst.selection(np.flatnonzero(chosen))


def _first_improving_swap(B, Lam, in_set):
    """Lexicographic scan for (i in S, j not in S) with a positive determinant ratio - 1."""
    W = Lam @ B
    beta = np.sum(B * W, axis=0)
    outside = ~in_set
    for i in np.flatnonzero(in_set):
        gamma = B[:, i] @ W
        delta = beta - beta[i] * beta + gamma ** 2 - beta[i]
        hits = np.flatnonzero(outside & (delta > SWAP_TOL))
        if hits.size:
            return int(i), int(hits[0])
    return None


def _local_search(inst: DdfInstance, init=None, refresh: int = 64) -> tuple[Selection, int]:
    if init is None:
        start = greedy(inst, refresh=refresh).indices
    else:
        start = tuple(sorted(int(i) for i in (init.indices if isinstance(init, Selection) else init)))
        if len(start) != inst.s or len(set(start)) != inst.s or any(i < 0 or i >= inst.n for i in start):
            raise BadInit(f"initial selection must be {inst.s} distinct indices in 0..{inst.n - 1}")

    in_set = np.zeros(inst.n, dtype=bool)
    in_set[list(start)] = True
    X = np.eye(inst.d) + inst.B[:, in_set] @ inst.B[:, in_set].T
    tracker = linalg.InverseTracker(X, refresh=refresh)
    swaps = 0
    while True:
        swap = _first_improving_swap(inst.B, tracker.inv, in_set)
        if swap is None:
            # rescan with an inverse computed from scratch
            B_S = inst.B[:, in_set]
            fresh = linalg.InverseTracker(np.eye(inst.d) + B_S @ B_S.T, refresh=refresh)
            swap = _first_improving_swap(inst.B, fresh.inv, in_set)
            if swap is None:
                break
            tracker = fresh
        i, j = swap
        tracker.update(inst.B[:, j], +1)
        tracker.update(inst.B[:, i], -1)
        in_set[i], in_set[j] = False, True
        swaps += 1
        logger.debug("swap %d: out %d, in %d", swaps, i, j)
    return inst.selection(np.flatnonzero(in_set)), swaps


def local_search(inst: DdfInstance, init=None, refresh: int = 64) -> Selection:
    """
    1-swap local search with first-improvement acceptance.

    Scans i ascending in S and j ascending outside S, accepting a swap when the
    determinant ratio exceeds 1 + 1e-9. On termination no improving swap exists,
    which is confirmed with an inverse recomputed from scratch.

    Args:
        inst: The instance.
        init: Starting selection (indices or Selection); greedy output if omitted.
        refresh: Updates between full recomputations of the tracked inverse.

    Raises:
        BadInit: If init is not a cardinality-s subset of 0..n-1.
    """
    return _local_search(inst, init, refresh)[0]


def has_improving_swap(inst: DdfInstance, S) -> bool:
    in_set = np.zeros(inst.n, dtype=bool)
    in_set[list(S)] = True
    X = np.eye(inst.d) + inst.B[:, in_set] @ inst.B[:, in_set].T
    return _first_improving_swap(inst.B, np.linalg.inv(X), in_set) is not None


# -----------------------------------------------------------------------------
# Sampling
# -----------------------------------------------------------------------------

class SubsetSampler:
    """
    Draws size-k subsets with P(S) proportional to prod_{i in S} x_i.

    Inclusion is decided index by index: with t points still to choose,
    P(i in | t) = x_i e_{t-1}(x_{i+1:}) / e_t(x_{i:}).
    """

    def __init__(self, x, k: int):
        x = np.asarray(x, dtype=float)
        if np.any(x < -SUPPORT_TOL):
            raise InputError("sampling weights must be nonnegative")
        x = np.clip(x, 0.0, None)
        x[x <= SUPPORT_TOL] = 0.0
        self.n, self.k = x.size, int(k)
        if int(np.sum(x > 0)) < self.k:
            raise InsufficientSupport(f"{int(np.sum(x > 0))} positive weights, need {self.k}")
        self.x = x
        suffix = linalg.log_elem_sym_table(x[::-1], self.k)
        n = self.n
        with np.errstate(divide="ignore", invalid="ignore"):
            logx = np.log(x)
        P = np.zeros((n, self.k + 1))
        for i in range(n):
            rest = n - i - 1
            for t in range(1, self.k + 1):
                if suffix[t, rest + 1] == -np.inf:
                    continue
                if suffix[t, rest] == -np.inf:
                    P[i, t] = 1.0
                else:
                    P[i, t] = np.exp(logx[i] + suffix[t - 1, rest] - suffix[t, rest + 1])
        self.P = np.clip(P, 0.0, 1.0)

    def draws(self, rng, count: int) -> np.ndarray:
        """count x k array of sorted index sets."""
        rng = np.random.default_rng(rng)
        remaining = np.full(count, self.k)
        picks = np.zeros((count, self.n), dtype=bool)
        for i in range(self.n):
            u = rng.random(count)
            take = u < self.P[i, remaining]
            picks[:, i] = take
            remaining -= take.astype(int)
        out = np.nonzero(picks)[1].reshape(count, self.k)
        return out

    def draw(self, rng) -> tuple:
        return tuple(int(i) for i in self.draws(rng, 1)[0])


def sample_subset(x, s: int, rng=None) -> tuple:
    """
    One subset of size s drawn with product weights x.

    Raises:
        InsufficientSupport: If fewer than s entries of x are positive.
    """
    return SubsetSampler(x, s).draw(rng)


def sample_from_relaxation(inst: DdfInstance, point: FracPoint, rng=None) -> Selection:
    """
    Samples a selection from a relaxation point; complement points draw the
    excluded set and return its complement.
    """
    if point.formulation in COMPLEMENT_FORMULATIONS:
        k = inst.n - inst.s
        excluded = sample_subset(point.x, k, rng) if k else ()
        return inst.selection(sorted(set(range(inst.n)) - set(excluded)))
    return inst.selection(sample_subset(point.x, inst.s, rng))


def _kernel(inst: DdfInstance, formulation: str):
    if formulation in COMPLEMENT_FORMULATIONS:
        return inst.U.T @ inst.U, inst.n - inst.s, inst.logdet_CAA
    return inst.M, inst.s, inst.logdet_C


def _log_es_scaled(K, y, k: int) -> float:
    if k == 0:
        return 0.0
    root = np.sqrt(y)
    lam = linalg.eigvals_desc((root[:, None] * K) * root[None, :])
    return linalg.log_elem_sym_poly(np.clip(lam, 0.0, None), k)


def sampling_expectation_exact(inst: DdfInstance, x, formulation: str = "R") -> float:
    """
    log E[det(C + sum_{i in S} a_i a_i^T)] under product-weighted sampling.

    Equals log e_k(eig(D^{1/2} K D^{1/2})) - log e_k(x) plus a constant, with
    K = M (selection space) or K = M^{-1} (exclusion space of the complement
    formulations), D = Diag(x).
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, None)
    K, k, const = _kernel(inst, formulation)
    if k == 0:
        return const
    return const + _log_es_scaled(K, x, k) - linalg.log_elem_sym_poly(x, k)


def _conditional_log_expectation(K, y, fixed_in, rest, t) -> float:
    """log E[det K_T] given fixed_in is in T and t more points come from rest."""
    fixed_in, rest = list(fixed_in), list(rest)
    log_denom = linalg.log_elem_sym_poly(y[rest], t)
    if log_denom == -np.inf:
        return -np.inf
    if fixed_in:
        K_ff = K[np.ix_(fixed_in, fixed_in)]
        L = linalg.cholesky(K_ff)
        head = float(2.0 * np.sum(np.log(np.diag(L))))
        if not rest or t == 0:
            return head
        K_fr = K[np.ix_(fixed_in, rest)]
        Z = scipy.linalg.cho_solve((L, True), K_fr)
        schur = K[np.ix_(rest, rest)] - K_fr.T @ Z
        schur = 0.5 * (schur + schur.T)
    else:
        head = 0.0
        if t == 0:
            return 0.0
        schur = K[np.ix_(rest, rest)]
    return head + _log_es_scaled(schur, y[rest], t) - log_denom


def derandomize(inst: DdfInstance, x, formulation: str = "R") -> Selection:
    """
    Method of conditional expectations over the product-weighted sampler.

    Indices are processed in order; each is fixed to whichever branch has the
    larger conditional expectation, subject to the remaining budget. The result
    is never worse than sampling_expectation_exact(inst, x, formulation).

    Raises:
        InsufficientSupport: If x has fewer positive entries than the sample size.
    """
    y = np.clip(np.asarray(x, dtype=float), 0.0, None)
    y[y <= SUPPORT_TOL] = 0.0
    K, k, _ = _kernel(inst, formulation)
    if int(np.sum(y > 0)) < k:
        raise InsufficientSupport(f"{int(np.sum(y > 0))} positive weights, need {k}")
    chosen = []
    rest = list(range(inst.n))
    for j in range(inst.n):
        t = k - len(chosen)
        rest.remove(j)
        if t == 0:
            continue
        if len(rest) < t:
            chosen.append(j)
            continue
        if y[j] == 0.0:
            continue
        e_in = _conditional_log_expectation(K, y, chosen + [j], rest, t - 1)
        e_out = _conditional_log_expectation(K, y, chosen, rest, t)
        if e_in >= e_out:
            chosen.append(j)
    if formulation in COMPLEMENT_FORMULATIONS:
        chosen = sorted(set(range(inst.n)) - set(chosen))
    return inst.selection(chosen)


# -----------------------------------------------------------------------------
# Bound tables
# -----------------------------------------------------------------------------

def _xlogx_ratio(t: int, n: int) -> float:
    return t * np.log(t / n) if t > 0 else 0.0


def theoretical_bounds(inst: DdfInstance, x_min: float | None = None) -> dict:
    """
    Worst-case distances to the optimum for local search and sampling.

    The local-search sigma_max bound appears with both d and n; "local_search"
    uses the larger of the two.
    """
    n, d, s = inst.n, inst.d, inst.s
    s_bar = inst.s_bar
    sigma = inst.sigma_max
    ratio = s_bar * sigma ** 2 / (1.0 + sigma)
    out = {
        "local_search_d": d * np.log1p(ratio / d),
        "local_search_n": n * np.log1p(ratio / n),
        "local_search_sbar": s_bar * np.log(s_bar) if s_bar > 1 else 0.0,
        "sampling_M": _xlogx_ratio(s, n) + linalg.log_binom(n, s),
        "sampling_Mc": _xlogx_ratio(n - s, n) + linalg.log_binom(n, s),
    }
    out["local_search"] = min(max(out["local_search_d"], out["local_search_n"]), out["local_search_sbar"])
    out["sampling"] = min(out["sampling_M"], out["sampling_Mc"])
    if x_min is not None and x_min > 0:
        out["sampling_R"] = -n * np.log(x_min) + (n - s) * np.log1p(inst.delta)
    return {k: float(v) for k, v in out.items()}


def bound_curves(n: int) -> list[dict]:
    """
    Approximation and relaxation-gap curves for s = 1..n-1 at fixed n.

    Columns: the s_bar-based local-search and sampling bounds next to the
    s-based ones they improve on, and both relaxation-gap ceilings of the M and
    Mc relaxations.
    """
    if n < 2:
        raise InputError("curves need n >= 2")
    rows = []
    for s in range(1, n):
        s_bar = min(s, n - s)
        c = n - s
        rows.append({
            "s": s,
            "local_sbar": s_bar * np.log(s_bar) if s_bar > 1 else 0.0,
            "local_s": s * np.log(s - (s - 1) / s * max(2 * s - n, 0)),
            "sampling_sbar": _xlogx_ratio(s_bar, n) + linalg.log_binom(n, s_bar),
            "sampling_s": s * np.log(s_bar / n) + linalg.log_binom(n, s),
            "gap_M_local": s * np.log(s - (s - 1) / s * max(2 * s - n, 0)),
            "gap_M_sampling": _xlogx_ratio(s, n) + linalg.log_binom(n, s),
            "gap_Mc_local": c * np.log(c - (c - 1) / c * max(2 * c - n, 0)),
            "gap_Mc_sampling": _xlogx_ratio(c, n) + linalg.log_binom(n, c),
        })
    return [{k: (v if k == "s" else float(v)) for k, v in row.items()} for row in rows]


# -----------------------------------------------------------------------------
# Runner
# -----------------------------------------------------------------------------

def default_sampling_formulation(inst: DdfInstance) -> str:
    return "M" if inst.s <= inst.n / 2 else "Mc"


def run_approx(
    inst: DdfInstance,
    method: str,
    seed: int | None = None,
    init=None,
    bounds: BoundReport | None = None,
    point: FracPoint | None = None,
    refresh: int = 64,
) -> ApproxReport:
    """
    Runs one approximation method and checks it against certified bounds.

    Sampling and derandomization need a relaxation point; it is taken from
    `point`, else from `bounds`.
    """
    if method not in METHODS:
        raise InputError(f"unknown method '{method}', expected one of {', '.join(METHODS)}")
    extra = {}
    steps = 0
    if method == "greedy":
        selection = greedy(inst, refresh=refresh)
    elif method == "local":
        selection, steps = _local_search(inst, init, refresh)
    else:
        if point is None:
            if bounds is None:
                raise InputError(f"method '{method}' needs a relaxation point")
            point = bounds.points.get(default_sampling_formulation(inst), bounds.points["M"])
        weights = point.x
        extra["relaxation"] = point.formulation
        extra["expectation"] = sampling_expectation_exact(inst, weights, point.formulation)
        if method == "sample":
            selection = sample_from_relaxation(inst, point, np.random.default_rng(seed))
        else:
            selection = derandomize(inst, weights, point.formulation)
    checks = []
    if bounds is not None:
        for name in ("zR", "zM", "zMc"):
            value = getattr(bounds, name)
            checks.append((name, value, selection.objective <= value + 1e-6))
        extra["gap"] = bounds.best - selection.objective
    logger.info("%s: objective %.9g after %d step(s)", method, selection.objective, steps)
    return ApproxReport(method=method, selection=selection, steps=steps, seed=seed, bound_checks=checks, extra=extra)
