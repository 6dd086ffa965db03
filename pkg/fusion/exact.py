"""
Exact solution by branch-and-bound.

Node bounds are the minimum of a cut-pool bound and restricted Lagrangian dual
certificates from Frank-Wolfe. The pool holds gradient and submodular cuts;
probing adds optimality constraints, stored as disjunctions
"not (S1 all selected and S0 all excluded)" and propagated at every node.

Cardinality settings of the optimality constraints:
    a  S1 = {},  |S0| = 1   (fix x_l = 1)
    b  |S1| = 1, S0 = {}    (fix x_j = 0)
    c  S1 = {},  |S0| = 2   (x_i + x_l >= 1)
    d  |S1| = 2, S0 = {}    (x_i + x_j <= 1)
    e  |S1| = 1, |S0| = 1   (x_j <= x_l)
"""

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.linalg

from . import linalg
from .approx import local_search
from .exceptions import Contradiction, InfeasibleFixing, TooLarge
from .instance import DdfInstance, Selection
from .relax import DualCertificate, FracPoint, f_subgrad, f_value, frank_wolfe

logger = logging.getLogger(__name__)

Z_KINDS = ("grad_R", "grad_M", "submod_1", "submod_2")
CARD_KINDS = ("card_le", "card_ge")
SETTINGS = ("a", "b", "c", "d", "e")
FIX_MARGIN = 1e-9
BRUTE_FORCE_LIMIT = 10 ** 7
BRUTE_FORCE_BATCH = 4096


# -----------------------------------------------------------------------------
# Cuts and disjunctions
# -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearCut:
    """
    A linear inequality over x in {0,1}^n.

    z-bounding kinds read z - ldet C <= c0 + c^T x. card_le reads
    c^T x <= c0 with c the indicator of S1; card_ge reads c^T x >= c0 with c
    the indicator of S0.
    """
    kind: str
    c0: float
    c: np.ndarray
    origin: tuple = ()
    setting: str | None = None

    @property
    def bounds_objective(self) -> bool:
        return self.kind in Z_KINDS

    def value(self, x) -> float:
        return float(self.c0 + self.c @ np.asarray(x, dtype=float))

    def is_satisfied(self, x, z: float | None = None, tol: float = 1e-7) -> bool:
        x = np.asarray(x, dtype=float)
        if self.kind == "card_le":
            return float(self.c @ x) <= self.c0 + tol
        if self.kind == "card_ge":
            return float(self.c @ x) >= self.c0 - tol
        return z <= self.value(x) + tol

    def as_disjunction(self) -> "Disjunction":
        members = frozenset(int(i) for i in np.flatnonzero(self.c))
        if self.kind == "card_le":
            return Disjunction(S1=members, S0=frozenset(), setting=self.setting)
        if self.kind == "card_ge":
            return Disjunction(S1=frozenset(), S0=members, setting=self.setting)
        raise ValueError(f"{self.kind} cuts are not disjunctions")


@dataclass(frozen=True)
class Disjunction:
    """(sum_{S1} x <= |S1| - 1) or (sum_{S0} x >= 1)."""
    S1: frozenset
    S0: frozenset
    setting: str | None = None

    def is_satisfied(self, S) -> bool:
        S = set(S)
        return not (self.S1 <= S and not (self.S0 & S))

    def to_dict(self) -> dict:
        return {"S1": sorted(self.S1), "S0": sorted(self.S0), "setting": self.setting}


def _principal_logdet_and_inverse(inst: DdfInstance, S) -> tuple[float, np.ndarray]:
    """ldet B(S) and B(S)^{-1}, with B(S) = I_d + sum_{i in S} b_i b_i^T."""
    idx = list(S)
    B_S = inst.B[:, idx]
    L = linalg.cholesky(np.eye(inst.d) + B_S @ B_S.T)
    inv = scipy.linalg.cho_solve((L, True), np.eye(inst.d))
    return float(2.0 * np.sum(np.log(np.diag(L)))), 0.5 * (inv + inv.T)


def _quad(inst: DdfInstance, P) -> np.ndarray:
    return np.sum(inst.B * (P @ inst.B), axis=0)


def gradient_cuts(inst: DdfInstance, S) -> list[LinearCut]:
    """
    Linearizations at x = 1_S of the two concave objectives.

    The ldet cut works for any S; the f cut is added only for |S| = s, where
    f coincides with the determinant.
    """
    S = tuple(sorted(int(i) for i in S))
    ldet, P = _principal_logdet_and_inverse(inst, S)
    c = _quad(inst, P)
    cuts = [LinearCut("grad_R", ldet - float(np.sum(c[list(S)])), c, S)]
    if len(S) == inst.s:
        Y = inst.V[:, list(S)] @ inst.V[:, list(S)].T
        G = f_subgrad(Y, inst.s)
        w = np.sum(inst.V * (G @ inst.V), axis=0)
        log_f = f_value(linalg.eigvals_desc(Y), inst.s)
        cuts.append(LinearCut("grad_M", log_f - inst.s, w, S))
    return cuts


def submodular_cuts(inst: DdfInstance, S) -> list[LinearCut]:
    """
    The two submodular inequalities at S, with rho_i(T) = F(T + i) - F(T) and
    F(T) = ldet B(T):

        z <= F(S) - sum_{i in S} rho_i(N - i) (1 - x_i) + sum_{j not in S} rho_j(S) x_j
        z <= F(S) - sum_{i in S} rho_i(S - i) (1 - x_i) + sum_{j not in S} rho_j({}) x_j
    """
    S = tuple(sorted(int(i) for i in S))
    in_S = np.zeros(inst.n, dtype=bool)
    in_S[list(S)] = True
    F_S, P_S = _principal_logdet_and_inverse(inst, S)
    _, P_N = _principal_logdet_and_inverse(inst, range(inst.n))
    beta_S = _quad(inst, P_S)
    beta_N = _quad(inst, P_N)

    with np.errstate(invalid="ignore", divide="ignore"):
        c1 = np.where(in_S, -np.log1p(-beta_N), np.log1p(beta_S))
        c2 = np.where(in_S, -np.log1p(-beta_S), np.log1p(np.sum(inst.B * inst.B, axis=0)))
    return [
        LinearCut("submod_1", F_S - float(np.sum(c1[in_S])), c1, S),
        LinearCut("submod_2", F_S - float(np.sum(c2[in_S])), c2, S),
    ]


class CutPool:
    """Append-only store of z-bounding cuts and optimality disjunctions."""

    def __init__(self, inst: DdfInstance):
        self.inst = inst
        self.cuts: list[LinearCut] = []
        self.disjunctions: list[Disjunction] = []
        self._seen = set()
        self._c0 = np.zeros(0)
        self._C = np.zeros((0, inst.n))

    def __len__(self):
        return len(self.cuts)

    def add(self, cut: LinearCut) -> bool:
        key = (cut.kind, cut.origin, cut.setting)
        if key in self._seen:
            return False
        self._seen.add(key)
        if cut.bounds_objective:
            self.cuts.append(cut)
            self._c0 = np.append(self._c0, cut.c0)
            self._C = np.vstack([self._C, cut.c[None, :]])
        else:
            self.disjunctions.append(cut.as_disjunction())
        return True

    def add_disjunction(self, disj: Disjunction) -> bool:
        key = ("disj", tuple(sorted(disj.S1)), tuple(sorted(disj.S0)))
        if key in self._seen:
            return False
        self._seen.add(key)
        self.disjunctions.append(disj)
        return True

    def bound(self, fixed_in=(), fixed_out=()) -> float:
        """ldet C + min over cuts of their maximum over the node's binary completions."""
        if not self.cuts:
            return math.inf
        fixed_in, fixed_out = list(fixed_in), list(fixed_out)
        free = np.ones(self.inst.n, dtype=bool)
        free[fixed_in] = False
        free[fixed_out] = False
        residual = self.inst.s - len(fixed_in)
        values = self._c0 + self._C[:, fixed_in].sum(axis=1)
        if residual > 0:
            top = -np.sort(-self._C[:, free], axis=1)[:, :residual]
            values = values + top.sum(axis=1)
        return self.inst.logdet_C + float(values.min())


def cut_pool_bound(pool: CutPool, node: "BnbNode") -> float:
    """Cut-pool bound at a node, under its fixings."""
    return pool.bound(node.fixed_in, node.fixed_out)


# -----------------------------------------------------------------------------
# Probing
# -----------------------------------------------------------------------------

def _selection_fixings(cert: DualCertificate) -> tuple[frozenset, frozenset]:
    if cert.is_complement:
        return cert.fixed_out, cert.fixed_in
    return cert.fixed_in, cert.fixed_out


def probe_fix(inst: DdfInstance, cert: DualCertificate, z_lb: float) -> tuple[set, set]:
    """
    Closed-form variable fixing from a certificate and a lower bound.

    Forcing j in changes the bound by w_j - nu - mu_j and forcing l out by
    -mu_l; a forced assignment whose bound falls below z_lb - 1e-9 cannot be
    optimal.

    Returns:
        tuple[set, set]: (indices fixed to zero, indices fixed to one).

    Raises:
        Contradiction: If the fixings leave no feasible completion.
    """
    into, out = cert.selection_shifts()
    sel_in, sel_out = _selection_fixings(cert)
    threshold = z_lb - FIX_MARGIN
    fix_zero, fix_one = set(), set()
    for j in range(inst.n):
        if j in sel_in or j in sel_out:
            continue
        if cert.bound + into[j] < threshold:
            fix_zero.add(j)
        if cert.bound + out[j] < threshold:
            fix_one.add(j)
    if fix_zero & fix_one:
        raise Contradiction(f"indices {sorted(fix_zero & fix_one)} fixed both ways")
    if len(sel_in) + len(fix_one) > inst.s:
        raise Contradiction(f"{len(sel_in) + len(fix_one)} points fixed in, budget {inst.s}")
    if inst.n - len(sel_out) - len(fix_zero) < inst.s:
        raise Contradiction(f"only {inst.n - len(sel_out) - len(fix_zero)} points left, budget {inst.s}")
    return fix_zero, fix_one


@dataclass
class ProbeReport:
    """Outcome of pair probing at one node."""
    fix_one: set = field(default_factory=set)
    fix_zero: set = field(default_factory=set)
    cuts: list = field(default_factory=list)
    disjunctions: list = field(default_factory=list)
    counts: dict = field(default_factory=lambda: dict.fromkeys(SETTINGS, 0))
    tried: int = 0
    closed_form: int = 0
    restricted_runs: int = 0

    def to_dict(self) -> dict:
        return {
            "fixed_to_one": sorted(self.fix_one),
            "fixed_to_zero": sorted(self.fix_zero),
            "cut_counts": dict(self.counts),
            "cuts": [{"kind": c.kind, "members": sorted(int(i) for i in np.flatnonzero(c.c))} for c in self.cuts],
            "disjunctions": [d.to_dict() for d in self.disjunctions],
            "tried": self.tried,
            "closed_form": self.closed_form,
            "restricted_runs": self.restricted_runs,
        }


def _setting(S1, S0) -> str:
    return {(0, 1): "a", (1, 0): "b", (0, 2): "c", (2, 0): "d", (1, 1): "e"}[(len(S1), len(S0))]


def probe_pairs(
    inst: DdfInstance,
    point: FracPoint,
    cert: DualCertificate,
    z_lb: float,
    xi0: float = 0.05,
    xi1: float = 0.95,
    pair_budget: int | None = None,
    fw_iters: int = 200,
    fw_tol: float = 1e-6,
    formulations=("R", "M"),
    fixed_in=(),
    fixed_out=(),
) -> ProbeReport:
    """
    Refutes small forced assignments (S1 in, S0 out) with |S1| + |S0| <= 2.

    Candidates come from the primal point (S1 from entries <= xi0, S0 from
    entries >= xi1) and from the certificate (S1 where forcing in lowers the
    bound, S0 where mu > 0). They are tried in order of predicted bound shift,
    at most pair_budget of them; each is refuted in closed form if possible,
    otherwise by a restricted Frank-Wolfe run warm-started at the point.
    """
    report = ProbeReport()
    budget = 3 * inst.n if pair_budget is None else int(pair_budget)
    fixed = set(fixed_in) | set(fixed_out)
    into, out = cert.selection_shifts()
    x_hat = point.selection_weights
    free = [i for i in range(inst.n) if i not in fixed]

    ones = sorted({i for i in free if x_hat[i] <= xi0} | {i for i in free if into[i] < 0.0})
    zeros = sorted({i for i in free if x_hat[i] >= xi1} | {i for i in free if out[i] < 0.0})
    candidates = []
    for j in ones:
        candidates.append(((j,), ()))
    for l in zeros:
        candidates.append(((), (l,)))
    for pair in itertools.combinations(ones, 2):
        candidates.append((pair, ()))
    for pair in itertools.combinations(zeros, 2):
        candidates.append(((), pair))
    for j in ones:
        for l in zeros:
            if j != l:
                candidates.append(((j,), (l,)))

    def predicted(cand):
        S1, S0 = cand
        return float(np.sum(into[list(S1)]) + np.sum(out[list(S0)]))

    candidates.sort(key=lambda cand: (predicted(cand), _setting(*cand), cand))
    threshold = z_lb - FIX_MARGIN

    for S1, S0 in candidates[:budget]:
        report.tried += 1
        if set(S1) & report.fix_zero or set(S0) & report.fix_one:
            continue
        refuted = cert.bound + predicted((S1, S0)) < threshold
        if refuted:
            report.closed_form += 1
        else:
            for name in formulations:
                try:
                    _, restricted = frank_wolfe(
                        inst, name, fixed_in=S1, fixed_out=S0, budget_iters=fw_iters,
                        tol=fw_tol, x0=x_hat, cutoff=threshold,
                    )
                except InfeasibleFixing:
                    break
                report.restricted_runs += 1
                if restricted.bound < threshold:
                    refuted = True
                    break
        if not refuted:
            continue
        setting = _setting(S1, S0)
        report.counts[setting] += 1
        if setting == "a":
            report.fix_one.add(S0[0])
        elif setting == "b":
            report.fix_zero.add(S1[0])
        elif setting == "c":
            c = np.zeros(inst.n)
            c[list(S0)] = 1.0
            report.cuts.append(LinearCut("card_ge", 1.0, c, S0, setting))
        elif setting == "d":
            c = np.zeros(inst.n)
            c[list(S1)] = 1.0
            report.cuts.append(LinearCut("card_le", 1.0, c, S1, setting))
        else:
            report.disjunctions.append(Disjunction(frozenset(S1), frozenset(S0), setting))
    if report.fix_one & report.fix_zero:
        raise Contradiction("pair probing fixed an index both ways")
    return report


# -----------------------------------------------------------------------------
# Branch-and-bound
# -----------------------------------------------------------------------------

@dataclass
class BnbConfig:
    """Solver limits, tolerances and toggles."""
    time_limit: float = 600.0
    node_limit: int = 100000
    gap_tol: float = 1e-6
    fw_root_iters: int = 2000
    fw_node_iters: int = 200
    fw_probe_iters: int = 200
    fw_tol: float = 1e-6
    dive_every: int = 50
    gradient_cuts: bool = True
    submodular_cuts: bool = True
    optimality_cuts: bool = True
    xi0: float = 0.05
    xi1: float = 0.95
    pair_budget_factor: int = 3
    sm_refresh: int = 64
    threads: int = 1

    @classmethod
    def from_settings(cls, **overrides) -> "BnbConfig":
        """Defaults from settings.FUSIONOPT, then the given overrides (None values ignored)."""
        from django.conf import settings

        names = {f.name for f in fields(cls)}
        values = {k.lower(): v for k, v in getattr(settings, "FUSIONOPT", {}).items() if k.lower() in names}
        values.update({k: v for k, v in overrides.items() if v is not None and k in names})
        return cls(**values)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(eq=False)
class BnbNode:
    """A restricted problem: fixed_in selected, fixed_out excluded."""
    fixed_in: frozenset
    fixed_out: frozenset
    upper_bound: float
    depth: int = 0
    warm: np.ndarray | None = None


@dataclass
class BnbResult:
    incumbent: Selection
    global_bound: float
    nodes_explored: int
    status: str
    cut_counts: dict
    fixed_to_one: int = 0
    fixed_to_zero: int = 0
    wall_time: float = 0.0
    root_bounds: dict = field(default_factory=dict)
    pool_size: int = 0
    history: list = field(default_factory=list)

    @property
    def solved(self) -> bool:
        return self.status == "optimal"

    @property
    def mip_gap(self) -> float:
        return self.global_bound - self.incumbent.objective

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "solved": self.solved,
            "selection": self.incumbent.as_list(),
            "objective": self.incumbent.objective,
            "global_bound": self.global_bound,
            "mip_gap": self.mip_gap,
            "nodes": self.nodes_explored,
            "cut_counts": dict(self.cut_counts),
            "fixed_to_one": self.fixed_to_one,
            "fixed_to_zero": self.fixed_to_zero,
            "root_bounds": dict(self.root_bounds),
            "pool_size": self.pool_size,
            "wall_time": self.wall_time,
            "history": [list(h) for h in self.history],
        }


class _Infeasible(Exception):
    pass


def _propagate(inst: DdfInstance, disjunctions, fixed_in: set, fixed_out: set) -> tuple[set, set]:
    """
    Applies the disjunctions until nothing changes.

    Raises:
        _Infeasible: If a disjunction is violated or the budget cannot be met.
    """
    changed = True
    while changed:
        changed = False
        for disj in disjunctions:
            pending1 = [i for i in disj.S1 if i not in fixed_in]
            pending0 = [i for i in disj.S0 if i not in fixed_out]
            if any(i in fixed_out for i in pending1) or any(i in fixed_in for i in pending0):
                continue
            pending = len(pending1) + len(pending0)
            if pending == 0:
                raise _Infeasible()
            if pending == 1:
                if pending1:
                    fixed_out.add(pending1[0])
                else:
                    fixed_in.add(pending0[0])
                changed = True
    if fixed_in & fixed_out or len(fixed_in) > inst.s or inst.n - len(fixed_out) < inst.s:
        raise _Infeasible()
    return fixed_in, fixed_out


def _round(inst: DdfInstance, weights, fixed_in, fixed_out) -> tuple:
    free = np.array([i for i in range(inst.n) if i not in fixed_in and i not in fixed_out], dtype=int)
    residual = inst.s - len(fixed_in)
    order = free[np.lexsort((free, -np.asarray(weights)[free]))]
    return tuple(sorted(set(fixed_in) | set(int(i) for i in order[:residual])))


class _Search:
    """Mutable branch-and-bound state."""

    def __init__(self, inst: DdfInstance, config: BnbConfig):
        self.inst = inst
        self.config = config
        self.pool = CutPool(inst)
        self.incumbent: Selection | None = None
        self.heap = []
        self.counter = itertools.count()
        self.pruned_max = -math.inf
        self.nodes = 0
        self.history = []

    def offer(self, S) -> bool:
        candidate = self.inst.selection(S)
        if self.incumbent is not None and candidate.objective <= self.incumbent.objective:
            return False
        self.incumbent = candidate
        logger.info("incumbent %.9g at node %d: %s", candidate.objective, self.nodes, candidate.as_list())
        self.add_cuts_at(candidate.indices)
        return True

    def add_cuts_at(self, S):
        if self.config.gradient_cuts:
            for cut in gradient_cuts(self.inst, S):
                self.pool.add(cut)
        if self.config.submodular_cuts:
            for cut in submodular_cuts(self.inst, S):
                self.pool.add(cut)

    def push(self, node: BnbNode):
        heapq.heappush(self.heap, (-node.upper_bound, next(self.counter), node))

    def pop(self) -> BnbNode:
        if self.config.dive_every and self.nodes and self.nodes % self.config.dive_every == 0:
            pos = max(range(len(self.heap)), key=lambda k: (self.heap[k][2].depth, -self.heap[k][1]))
            entry = self.heap.pop(pos)
            heapq.heapify(self.heap)
            return entry[2]
        return heapq.heappop(self.heap)[2]

    def prune(self, bound: float):
        self.pruned_max = max(self.pruned_max, bound)

    def global_bound(self) -> float:
        open_max = -self.heap[0][0] if self.heap else -math.inf
        return max(self.incumbent.objective, open_max, self.pruned_max)

    def snapshot(self):
        self.history.append((self.nodes, self.incumbent.objective, self.global_bound()))


@dataclass
class RootAnalysis:
    """Root relaxations, incumbent candidates and the fixings probing derived from them."""
    local: Selection
    rounded: Selection
    points: dict
    certificates: dict
    best: str
    fix_one: set = field(default_factory=set)
    fix_zero: set = field(default_factory=set)
    probe: ProbeReport | None = None

    @property
    def incumbent(self) -> Selection:
        return max(self.local, self.rounded, key=lambda sel: sel.objective)

    @property
    def bound(self) -> float:
        return self.certificates[self.best].bound

    def counts(self) -> dict:
        counts = dict.fromkeys(SETTINGS, 0)
        if self.probe is not None:
            counts.update(self.probe.counts)
        counts["a"] = len(self.fix_one)
        counts["b"] = len(self.fix_zero)
        return counts

    def to_dict(self) -> dict:
        return {
            "incumbent": self.incumbent.as_list(),
            "objective": self.incumbent.objective,
            "root_bounds": {name: cert.bound for name, cert in self.certificates.items()},
            "best_formulation": self.best,
            "fixed_to_one": sorted(self.fix_one),
            "fixed_to_zero": sorted(self.fix_zero),
            "cut_counts": self.counts(),
            "probe": None if self.probe is None else self.probe.to_dict(),
        }


def analyze_root(inst: DdfInstance, config: BnbConfig) -> RootAnalysis:
    """
    Local search, Frank-Wolfe on R, M and Mc, rounding of the tightest point and,
    with optimality cuts enabled, closed-form fixing from every certificate
    followed by pair probing.

    Raises:
        Contradiction: If the fixings leave no feasible selection.
    """
    local = local_search(inst, refresh=config.sm_refresh)
    points, certs = {}, {}
    for name in ("R", "M", "Mc") if inst.s < inst.n else ("R", "M"):
        points[name], certs[name] = frank_wolfe(inst, name, budget_iters=config.fw_root_iters, tol=config.fw_tol)
    best = min(certs, key=lambda k: certs[k].bound)
    rounded = inst.selection(_round(inst, points[best].selection_weights, (), ()))
    root = RootAnalysis(local=local, rounded=rounded, points=points, certificates=certs, best=best)
    logger.info(
        "root: incumbent %.9g, bounds %s",
        root.incumbent.objective, ", ".join(f"{k} {c.bound:.9g}" for k, c in certs.items()),
    )
    if not config.optimality_cuts:
        return root

    z_lb = root.incumbent.objective
    for cert in certs.values():
        zero, one = probe_fix(inst, cert, z_lb)
        root.fix_zero |= zero
        root.fix_one |= one
    root.probe = probe_pairs(
        inst, points[best], certs[best], z_lb,
        xi0=config.xi0, xi1=config.xi1, pair_budget=config.pair_budget_factor * inst.n,
        fw_iters=config.fw_probe_iters, fw_tol=config.fw_tol,
        fixed_in=root.fix_one, fixed_out=root.fix_zero,
    )
    root.fix_zero |= root.probe.fix_zero
    root.fix_one |= root.probe.fix_one
    if root.fix_zero & root.fix_one or len(root.fix_one) > inst.s or inst.n - len(root.fix_zero) < inst.s:
        raise Contradiction("root fixings leave no feasible selection")
    return root


def solve_bnb(inst: DdfInstance, config: BnbConfig | None = None) -> BnbResult:
    """
    Best-bound-first branch-and-bound with cuts, probing and fixing.

    Args:
        inst: The instance.
        config: Limits and toggles; BnbConfig() defaults when omitted.

    Returns:
        BnbResult: status is "optimal", "time_limit" or "node_limit"; the global
        bound is valid in every case.

    Raises:
        Contradiction: If root probing fixes more points than the budget allows.
    """
    config = config or BnbConfig()
    started = time.monotonic()
    counts = dict.fromkeys(SETTINGS, 0)
    search = _Search(inst, config)

    if inst.s == inst.n:
        search.offer(range(inst.n))
        search.nodes = 1
        search.snapshot()
        return BnbResult(
            incumbent=search.incumbent,
            global_bound=search.incumbent.objective,
            nodes_explored=1,
            status="optimal",
            cut_counts=counts,
            wall_time=time.monotonic() - started,
            history=search.history,
        )

    root = analyze_root(inst, config)
    search.offer(root.local.indices)
    search.offer(root.rounded.indices)
    fix_one, fix_zero = root.fix_one, root.fix_zero
    if root.probe is not None:
        for cut in root.probe.cuts:
            search.pool.add(cut)
        for disj in root.probe.disjunctions:
            search.pool.add_disjunction(disj)
    counts = root.counts()
    certs = root.certificates

    search.push(BnbNode(frozenset(fix_one), frozenset(fix_zero), root.bound, 0, root.points["M"].selection_weights))
    search.snapshot()
    status = "optimal"
    node_formulations = ("R", "M", "Mc") if inst.n - inst.s < inst.s else ("R", "M")

    while search.heap:
        if time.monotonic() - started >= config.time_limit:
            status = "time_limit"
            break
        if search.nodes >= config.node_limit:
            status = "node_limit"
            break
        node = search.pop()
        search.nodes += 1
        _process(search, node, node_formulations)
        search.snapshot()

    global_bound = search.global_bound()
    if status != "optimal":
        logger.warning("%s reached after %d nodes; gap %.3g", status, search.nodes, global_bound - search.incumbent.objective)
    logger.info("finished (%s): %d nodes, objective %.9g, bound %.9g", status, search.nodes, search.incumbent.objective, global_bound)
    return BnbResult(
        incumbent=search.incumbent,
        global_bound=global_bound,
        nodes_explored=search.nodes,
        status=status,
        cut_counts=counts,
        fixed_to_one=len(fix_one),
        fixed_to_zero=len(fix_zero),
        wall_time=time.monotonic() - started,
        root_bounds={name: cert.bound for name, cert in certs.items()},
        pool_size=len(search.pool),
        history=search.history,
    )


def _process(search: _Search, node: BnbNode, formulations):
    inst, config = search.inst, search.config
    cutoff = search.incumbent.objective + config.gap_tol
    if node.upper_bound <= cutoff:
        search.prune(node.upper_bound)
        return
    try:
        fixed_in, fixed_out = _propagate(inst, search.pool.disjunctions, set(node.fixed_in), set(node.fixed_out))
    except _Infeasible:
        return

    while True:
        residual = inst.s - len(fixed_in)
        n_free = inst.n - len(fixed_in) - len(fixed_out)
        if residual == 0 or residual == n_free:
            S = fixed_in if residual == 0 else set(range(inst.n)) - fixed_out
            search.offer(S)
            search.prune(inst.objective(S))
            return

        node = replace(node, fixed_in=frozenset(fixed_in), fixed_out=frozenset(fixed_out))
        bound = min(node.upper_bound, cut_pool_bound(search.pool, node))
        if bound <= cutoff:
            search.prune(bound)
            return
        best_point, best_cert = None, None
        for name in formulations:
            point, cert = frank_wolfe(
                inst, name, fixed_in, fixed_out, budget_iters=config.fw_node_iters,
                tol=config.fw_tol, x0=node.warm, cutoff=cutoff,
            )
            if best_cert is None or cert.bound < best_cert.bound:
                best_point, best_cert = point, cert
            bound = min(bound, cert.bound)
            if bound <= cutoff:
                break
        if bound <= cutoff:
            search.prune(bound)
            return

        if search.offer(_round(inst, best_point.selection_weights, fixed_in, fixed_out)):
            cutoff = search.incumbent.objective + config.gap_tol
            if bound <= cutoff:
                search.prune(bound)
                return

        if not config.optimality_cuts:
            break
        try:
            zero, one = probe_fix(inst, best_cert, search.incumbent.objective)
        except Contradiction:
            search.prune(bound)
            return
        if not zero and not one:
            break
        try:
            fixed_in, fixed_out = _propagate(inst, search.pool.disjunctions, fixed_in | one, fixed_out | zero)
        except _Infeasible:
            search.prune(bound)
            return
        node = BnbNode(frozenset(fixed_in), frozenset(fixed_out), bound, node.depth, best_point.selection_weights)

    # branch on the free point whose gradient is farthest from nu
    gap = np.abs(best_cert.w - best_cert.nu)
    free = [i for i in range(inst.n) if i not in fixed_in and i not in fixed_out]
    j = min(free, key=lambda i: (-gap[i], i))
    warm = best_point.selection_weights
    depth = node.depth + 1
    search.push(BnbNode(frozenset(fixed_in | {j}), frozenset(fixed_out), bound, depth, warm))
    search.push(BnbNode(frozenset(fixed_in), frozenset(fixed_out | {j}), bound, depth, warm))


# -----------------------------------------------------------------------------
# Enumeration
# -----------------------------------------------------------------------------

def _check_size(inst: DdfInstance) -> int:
    count = math.comb(inst.n, inst.s)
    if count > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"C({inst.n}, {inst.s}) = {count} subsets exceeds {BRUTE_FORCE_LIMIT}")
    return count


def _batched_objectives(inst: DdfInstance):
    combos = itertools.combinations(range(inst.n), inst.s)
    while True:
        block = np.array(list(itertools.islice(combos, BRUTE_FORCE_BATCH)), dtype=int)
        if block.size == 0:
            return
        block = block.reshape(-1, inst.s)
        sub = inst.M[block[:, :, None], block[:, None, :]]
        _, logdets = np.linalg.slogdet(sub)
        yield block, inst.logdet_C + logdets


def enumerate_objectives(inst: DdfInstance) -> tuple[np.ndarray, np.ndarray]:
    """All size-s subsets in lexicographic order and their objective values."""
    _check_size(inst)
    blocks, values = zip(*_batched_objectives(inst))
    return np.vstack(blocks), np.concatenate(values)


def brute_force(inst: DdfInstance) -> Selection:
    """
    Exact maximizer by enumeration in lexicographic order (first maximum wins).

    Raises:
        TooLarge: If C(n, s) exceeds 10^7.
    """
    _check_size(inst)
    best_value, best_set = -math.inf, None
    for block, values in _batched_objectives(inst):
        k = int(np.argmax(values))
        if values[k] > best_value:
            best_value, best_set = values[k], block[k]
    return inst.selection(best_set)
