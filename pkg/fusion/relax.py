"""
Continuous relaxations and certified upper bounds.

Three concave relaxations of the fusion problem are maximized by Frank-Wolfe over
the capped simplex {x in [0,1]^n : sum x = budget}:

    R   ldet C + ldet(I_d + sum x_i b_i b_i^T),            budget s
    M   ldet C + log f(sum x_i v_i v_i^T, s),               budget s
    Mc  ldet(C + A A^T) + log f(sum y_i u_i u_i^T, n - s),  budget n - s

Mc works in exclusion space: y_i = 1 means point i is left out. Every iterate
yields a feasible Lagrangian dual point (DualCertificate) whose bound is valid
whether or not Frank-Wolfe has converged.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import linalg
from .exceptions import DegenerateSpectrum, InfeasibleFixing, InputError
from .instance import DdfInstance

logger = logging.getLogger(__name__)

FORMULATIONS = ("R", "M", "Mc")
COMPLEMENT_FORMULATIONS = ("Mc", "Rc")

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
LINE_SEARCH_STEPS = 20
TAIL_EPS = 1e-300
POSITIVE_TOL = 1e-9


# -----------------------------------------------------------------------------
# The function f
# -----------------------------------------------------------------------------

def find_k(lam, s: int) -> int:
    """
    The unique 0 <= k < s with lambda_{k-1} > tail / (s - k) >= lambda_k, where
    tail = sum_{i >= k} lambda_i (0-based, lambda_{-1} = +inf).

    Args:
        lam (array_like): Nonnegative values sorted descending.
        s (int): Degree, 1 <= s <= len(lam).

    Raises:
        DegenerateSpectrum: If the tail sum vanishes before k is found.
    """
    lam = np.asarray(lam, dtype=float)
    if s < 1 or s > lam.size:
        raise InputError(f"degree s={s} must lie in 1..{lam.size}")
    tails = np.cumsum(lam[::-1])[::-1]
    for k in range(s):
        tail = tails[k]
        if tail <= TAIL_EPS:
            raise DegenerateSpectrum(f"fewer than {s} positive eigenvalues")
        avg = tail / (s - k)
        if avg >= lam[k] * (1.0 - 1e-12):
            return k
    # k = s - 1 always satisfies the tail condition
    return s - 1


def f_value(lam, s: int) -> float:
    """log f(lam) = sum_{i<k} log lambda_i + (s - k) log(tail / (s - k))."""
    lam = np.clip(np.sort(np.asarray(lam, dtype=float))[::-1], 0.0, None)
    k = find_k(lam, s)
    tail = float(np.sum(lam[k:]))
    return float(np.sum(np.log(lam[:k])) + (s - k) * np.log(tail / (s - k)))


def _subgrad_eigs(lam, s: int) -> np.ndarray:
    k = find_k(lam, s)
    tail = float(np.sum(lam[k:]))
    g = np.full(lam.size, (s - k) / tail)
    g[:k] = 1.0 / lam[:k]
    return g


def f_subgrad(X, s: int) -> np.ndarray:
    """
    Supergradient of log f at a PSD matrix X.

    In the eigenbasis of X its eigenvalues are 1/lambda_i for the k leading
    eigenvalues and (s - k) / tail for the rest.
    """
    eig = linalg.sym_eig(X)
    lam = np.clip(eig.values, 0.0, None)
    g = _subgrad_eigs(lam, s)
    G = (eig.vectors * g) @ eig.vectors.T
    return 0.5 * (G + G.T)


# -----------------------------------------------------------------------------
# Gradient and curvature of the R relaxation
# -----------------------------------------------------------------------------

def rddf_value_grad(inst: DdfInstance, x) -> tuple[float, np.ndarray]:
    """
    ldet(X) and its gradient g_i = b_i^T X^{-1} b_i, with X = I_d + sum x_i b_i b_i^T.
    """
    x = np.asarray(x, dtype=float)
    X = np.eye(inst.d) + (inst.B * x) @ inst.B.T
    L = linalg.cholesky(X)
    W = scipy.linalg.solve_triangular(L, inst.B, lower=True)
    return float(2.0 * np.sum(np.log(np.diag(L)))), np.sum(W * W, axis=0)


def rddf_hessian(inst: DdfInstance, x) -> np.ndarray:
    """H = -(B^T X^{-1} B) o (B^T X^{-1} B) (Hadamard square)."""
    x = np.asarray(x, dtype=float)
    X = np.eye(inst.d) + (inst.B * x) @ inst.B.T
    P = inst.B.T @ np.linalg.solve(X, inst.B)
    return -(P * P)


def hessian_bound(inst: DdfInstance) -> float:
    """delta^2 with delta = lambda_max(B^T B); H(x) >= -delta^2 I on the box."""
    return inst.delta ** 2


# -----------------------------------------------------------------------------
# Dual certificates
# -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DualCertificate:
    """
    A feasible point (Lambda, nu, mu) of a Lagrangian dual and its bound.

    Indices live in the formulation's own variable space, so for the complement
    formulations fixed_in holds excluded points.

    Attributes:
        base: Terms of the dual objective that do not involve nu or mu.
        w: w_i = (column i)^T Lambda (column i); the relaxation gradient at the point.
        budget: Right-hand side of the cardinality constraint (s or n - s).
        lam_eigs: Eigenvalues of Lambda, descending.
    """
    formulation: str
    base: float
    w: np.ndarray
    nu: float
    mu: np.ndarray
    budget: int
    fixed_in: frozenset
    fixed_out: frozenset
    bound: float
    lam_eigs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    Lam: np.ndarray | None = None

    @classmethod
    def assemble(cls, formulation, base, w, budget, fixed_in=(), fixed_out=(), floor_nu=True, **extra):
        """
        Picks nu as the residual-budget-th largest free w (floored at 0) and
        mu_i = max(w_i - nu, 0) on free indices, then sums the restricted bound.
        """
        w = np.asarray(w, dtype=float)
        n = w.size
        fixed_in, fixed_out = frozenset(fixed_in), frozenset(fixed_out)
        free = np.ones(n, dtype=bool)
        free[list(fixed_in)] = False
        free[list(fixed_out)] = False
        free_idx = np.flatnonzero(free)
        residual = budget - len(fixed_in)
        if free_idx.size == 0:
            nu = 0.0
        else:
            order = free_idx[np.lexsort((free_idx, -w[free_idx]))]
            nu = float(w[order[residual - 1]]) if residual > 0 else float(w[order[0]])
        if floor_nu:
            nu = max(nu, 0.0)
        mu = np.zeros(n)
        mu[free_idx] = np.maximum(w[free_idx] - nu, 0.0)
        bound = base + residual * nu + float(np.sum(mu)) + float(np.sum(w[list(fixed_in)]))
        return cls(
            formulation=formulation,
            base=float(base),
            w=w,
            nu=nu,
            mu=mu,
            budget=int(budget),
            fixed_in=fixed_in,
            fixed_out=fixed_out,
            bound=float(bound),
            **extra,
        )

    @property
    def is_complement(self) -> bool:
        return self.formulation in COMPLEMENT_FORMULATIONS

    def selection_shifts(self) -> tuple[np.ndarray, np.ndarray]:
        """
        Bound changes from forcing each point into / out of the selection.

        Entries of already fixed variables are zero.
        """
        into = self.w - self.nu - self.mu
        out = -self.mu.copy()
        fixed = list(self.fixed_in | self.fixed_out)
        into[fixed] = 0.0
        out[fixed] = 0.0
        if self.is_complement:
            return out, into
        return into, out

    def shifted(self, select=(), exclude=()) -> float:
        """
        Bound of the restricted problem that additionally forces `select` into and
        `exclude` out of the selection, reusing (Lambda, nu, mu).
        """
        into, out = self.selection_shifts()
        return self.bound + float(np.sum(into[list(select)])) + float(np.sum(out[list(exclude)]))

    def is_feasible(self, tol: float = 1e-9) -> bool:
        free = np.ones(self.w.size, dtype=bool)
        free[list(self.fixed_in | self.fixed_out)] = False
        ok = np.all(self.w[free] <= self.nu + self.mu[free] + tol)
        return bool(ok and np.all(self.mu >= 0.0) and self.nu >= 0.0)

    def to_dict(self) -> dict:
        return {
            "formulation": self.formulation,
            "bound": self.bound,
            "nu": self.nu,
            "mu": self.mu.tolist(),
            "lambda_eigenvalues": self.lam_eigs.tolist(),
        }


# -----------------------------------------------------------------------------
# Formulations
# -----------------------------------------------------------------------------

@dataclass
class _Evaluation:
    value: float
    grad: np.ndarray
    base: float
    Lam: np.ndarray
    lam_eigs: np.ndarray
    factor: np.ndarray


class Relaxation:
    """
    One of the concave relaxations, in its own variable space.

    The complement formulation Rc (exclusion over q_i) is certificate-only; it
    has the same relaxation value as R at y = 1 - x.
    """

    def __init__(self, inst: DdfInstance, formulation: str):
        self.inst = inst
        self.formulation = formulation
        if formulation == "R":
            self.vectors, self.budget, self.constant = inst.B, inst.s, inst.logdet_C
        elif formulation == "M":
            self.vectors, self.budget, self.constant = inst.V, inst.s, inst.logdet_C
        elif formulation == "Mc":
            self.vectors, self.budget, self.constant = inst.U, inst.n - inst.s, inst.logdet_CAA
        elif formulation == "Rc":
            self.vectors, self.budget, self.constant = inst.Q, inst.n - inst.s, inst.logdet_CAA
        else:
            raise InputError(f"unknown formulation '{formulation}'")
        self.n = inst.n

    @property
    def is_complement(self) -> bool:
        return self.formulation in COMPLEMENT_FORMULATIONS

    def variable_fixings(self, fixed_in=(), fixed_out=()) -> tuple[frozenset, frozenset]:
        """Maps selection-space fixings to this formulation's variables."""
        fixed_in, fixed_out = frozenset(int(i) for i in fixed_in), frozenset(int(i) for i in fixed_out)
        if self.is_complement:
            return fixed_out, fixed_in
        return fixed_in, fixed_out

    def to_variables(self, x_sel) -> np.ndarray:
        x_sel = np.asarray(x_sel, dtype=float)
        return 1.0 - x_sel if self.is_complement else x_sel.copy()

    def _matrix(self, x) -> np.ndarray:
        return (self.vectors * x) @ self.vectors.T

    def evaluate(self, x) -> _Evaluation:
        """Relaxation value at x, its gradient and the dual terms of the matching certificate."""
        x = np.asarray(x, dtype=float)
        if self.formulation in ("R", "Rc"):
            dim = self.vectors.shape[0]
            sign = -1.0 if self.formulation == "Rc" else 1.0
            X = np.eye(dim) + sign * self._matrix(x)
            L = linalg.cholesky(X)
            W = scipy.linalg.solve_triangular(L, self.vectors, lower=True)
            ldet = float(2.0 * np.sum(np.log(np.diag(L))))
            Lam = scipy.linalg.cho_solve((L, True), np.eye(dim))
            Lam = 0.5 * (Lam + Lam.T)
            return _Evaluation(
                value=self.constant + ldet,
                grad=sign * np.sum(W * W, axis=0),
                base=self.constant + ldet + float(np.trace(Lam)) - dim,
                Lam=Lam,
                lam_eigs=linalg.eigvals_desc(Lam),
                factor=L,
            )
        if self.budget == 0:
            return _Evaluation(self.constant, np.zeros(self.n), self.constant, np.eye(self.n), np.ones(self.n), None)
        eig = linalg.sym_eig(self._matrix(x))
        lam = np.clip(eig.values, 0.0, None)
        k = find_k(lam, self.budget)
        tail = float(np.sum(lam[k:]))
        log_f = float(np.sum(np.log(lam[:k])) + (self.budget - k) * np.log(tail / (self.budget - k)))
        g = _subgrad_eigs(lam, self.budget)
        W = eig.vectors.T @ self.vectors
        smallest = np.sort(g)[: self.budget]
        if np.any(smallest < 1e-14):
            logger.warning("flooring %d certificate eigenvalue(s) below 1e-14", int(np.sum(smallest < 1e-14)))
            smallest = np.maximum(smallest, 1e-14)
        Lam = (eig.vectors * g) @ eig.vectors.T
        return _Evaluation(
            value=self.constant + log_f,
            grad=g @ (W * W),
            base=self.constant - float(np.sum(np.log(smallest))) - self.budget,
            Lam=0.5 * (Lam + Lam.T),
            lam_eigs=np.sort(g)[::-1],
            factor=lam,
        )

    def line_function(self, x, direction, ev: _Evaluation):
        """phi(alpha) = relaxation value at x + alpha * direction, up to a constant."""
        D = self._matrix(direction)
        if self.formulation in ("R", "Rc"):
            if self.formulation == "Rc":
                D = -D
            L = ev.factor
            Z = scipy.linalg.solve_triangular(L, D, lower=True)
            Z = scipy.linalg.solve_triangular(L, Z.T, lower=True)
            mu = np.linalg.eigvalsh(0.5 * (Z + Z.T))

            def phi(alpha):
                t = 1.0 + alpha * mu
                if np.any(t <= 0.0):
                    return -np.inf
                return float(np.sum(np.log(t)))

            return phi

        Y = self._matrix(x)

        def phi(alpha):
            try:
                lam = np.linalg.eigvalsh(Y + alpha * D)[::-1]
                return f_value(np.clip(lam, 0.0, None), self.budget)
            except (DegenerateSpectrum, np.linalg.LinAlgError):
                return -np.inf

        return phi

    def certificate(self, ev: _Evaluation, fixed_in=(), fixed_out=()) -> DualCertificate:
        return DualCertificate.assemble(
            self.formulation,
            ev.base,
            ev.grad,
            self.budget,
            fixed_in,
            fixed_out,
            floor_nu=self.formulation != "Rc",
            lam_eigs=ev.lam_eigs,
            Lam=ev.Lam,
        )


def dual_from_gradient(inst: DdfInstance, formulation: str, x, fixed_in=(), fixed_out=()) -> DualCertificate:
    """
    Certificate built from the relaxation gradient at a feasible point.

    Args:
        inst: The instance.
        formulation: "R", "M", "Mc" or "Rc".
        x: Point in the formulation's variable space.
        fixed_in, fixed_out: Variable-space fixings of the restricted problem.
    """
    rel = Relaxation(inst, formulation)
    return rel.certificate(rel.evaluate(x), fixed_in, fixed_out)


# -----------------------------------------------------------------------------
# Frank-Wolfe
# -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FracPoint:
    """
    A fractional point of one relaxation.

    x is in the formulation's variable space; selection_weights is always in
    selection space.
    """
    x: np.ndarray
    formulation: str
    value: float
    bound: float
    gap: float
    iterations: int
    fixed_in: frozenset = frozenset()
    fixed_out: frozenset = frozenset()

    @property
    def budget(self) -> int:
        return int(round(float(np.sum(self.x))))

    @property
    def selection_weights(self) -> np.ndarray:
        if self.formulation in COMPLEMENT_FORMULATIONS:
            return 1.0 - self.x
        return self.x.copy()

    @property
    def x_min(self) -> float | None:
        """Least entry of x above POSITIVE_TOL; None when there is none."""
        positive = self.x[self.x > POSITIVE_TOL]
        return float(positive.min()) if positive.size else None


def _golden_section(phi, lo: float = 0.0, hi: float = 1.0) -> float:
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = phi(c), phi(d)
    for _ in range(LINE_SEARCH_STEPS):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = phi(d)
    alpha, best = (c, fc) if fc >= fd else (d, fd)
    if phi(hi) >= best:
        return hi
    return alpha


def _check_fixings(n: int, budget: int, fixed_in: frozenset, fixed_out: frozenset) -> np.ndarray:
    if fixed_in & fixed_out:
        raise InfeasibleFixing(f"indices fixed both ways: {sorted(fixed_in & fixed_out)}")
    if any(i < 0 or i >= n for i in fixed_in | fixed_out):
        raise InfeasibleFixing("fixed index out of range")
    free = np.ones(n, dtype=bool)
    free[list(fixed_in)] = False
    free[list(fixed_out)] = False
    residual = budget - len(fixed_in)
    if residual < 0 or residual > int(free.sum()):
        raise InfeasibleFixing(f"{len(fixed_in)} fixed in, {int(free.sum())} free, budget {budget}")
    return free


def _initial_point(n, budget, fixed_in, free, x0=None) -> np.ndarray:
    residual = budget - len(fixed_in)
    x = np.zeros(n)
    x[list(fixed_in)] = 1.0
    n_free = int(free.sum())
    if n_free == 0:
        return x
    uniform = residual / n_free
    x[free] = uniform
    if x0 is None or residual == 0 or residual == n_free:
        return x
    proj = project_box_simplex(np.asarray(x0, dtype=float)[free], residual)
    x[free] = 0.9 * proj + 0.1 * uniform
    return x


def project_box_simplex(v, total: float) -> np.ndarray:
    """
    Clamps v to [0, 1] and rescales proportionally so it sums to total, capping
    entries at one and redistributing the excess over the rest.
    """
    v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    if total <= 0:
        return np.zeros_like(v)
    if total >= v.size:
        return np.ones_like(v)
    if v.sum() <= 0.0:
        return np.full(v.size, total / v.size)
    out = np.zeros_like(v)
    capped = np.zeros(v.size, dtype=bool)
    for _ in range(v.size):
        remaining = total - capped.sum()
        active = ~capped
        mass = v[active].sum()
        if mass <= 0.0:
            out[active] = remaining / active.sum()
            break
        out[active] = v[active] * remaining / mass
        over = active & (out > 1.0)
        if not over.any():
            break
        capped |= over
        out[capped] = 1.0
    return out


def frank_wolfe(
    inst: DdfInstance,
    formulation: str = "R",
    fixed_in=(),
    fixed_out=(),
    budget_iters: int = 2000,
    tol: float = 1e-6,
    x0=None,
    cutoff: float | None = None,
) -> tuple[FracPoint, DualCertificate]:
    """
    Maximizes a relaxation over the capped simplex with the given fixings.

    Args:
        inst: The instance.
        formulation: "R", "M" or "Mc".
        fixed_in, fixed_out: Points forced into / out of the selection.
        budget_iters: Iteration cap.
        tol: Stop when the duality gap is at most tol * (1 + |bound|).
        x0: Optional warm start in selection space (projected, then mixed 9:1
            with the uniform point).
        cutoff: Stop as soon as the certified bound drops to this value.

    Returns:
        tuple[FracPoint, DualCertificate]: Last iterate and the certificate
        with the smallest bound seen.

    Raises:
        InfeasibleFixing: If no feasible point respects the fixings.
    """
    if formulation not in FORMULATIONS:
        raise InputError(f"unknown formulation '{formulation}'")
    rel = Relaxation(inst, formulation)
    sel_in, sel_out = frozenset(int(i) for i in fixed_in), frozenset(int(i) for i in fixed_out)
    _check_fixings(inst.n, inst.s, sel_in, sel_out)
    v_in, v_out = rel.variable_fixings(sel_in, sel_out)
    free = _check_fixings(inst.n, rel.budget, v_in, v_out)
    residual = rel.budget - len(v_in)
    free_idx = np.flatnonzero(free)

    x = _initial_point(inst.n, rel.budget, v_in, free, None if x0 is None else rel.to_variables(x0))
    best = None
    ev = None
    it = 0
    max_iters = max(int(budget_iters), 1)
    for it in range(1, max_iters + 1):
        ev = rel.evaluate(x)
        cert = rel.certificate(ev, v_in, v_out)
        if best is None or cert.bound < best.bound:
            best = cert
        if residual == 0 or residual == free_idx.size:
            break
        order = free_idx[np.lexsort((free_idx, -ev.grad[free_idx]))]
        vertex = np.zeros(inst.n)
        vertex[list(v_in)] = 1.0
        vertex[order[:residual]] = 1.0
        direction = vertex - x
        gap = float(ev.grad @ direction)
        if gap <= tol * (1.0 + abs(best.bound)):
            break
        if cutoff is not None and best.bound <= cutoff:
            break
        if it == max_iters:
            break
        alpha = _golden_section(rel.line_function(x, direction, ev))
        if alpha <= 0.0:
            alpha = 2.0 / (it + 2.0)
        x = np.clip(x + alpha * direction, 0.0, 1.0)

    logger.debug(
        "frank-wolfe %s: %d iterations, value %.9g, bound %.9g",
        formulation, it, ev.value, best.bound,
    )
    point = FracPoint(
        x=x,
        formulation=formulation,
        value=ev.value,
        bound=best.bound,
        gap=best.bound - ev.value,
        iterations=it,
        fixed_in=sel_in,
        fixed_out=sel_out,
    )
    return point, best


# -----------------------------------------------------------------------------
# Reports
# -----------------------------------------------------------------------------

def gap_ceilings(inst: DdfInstance, x_min: float | None = None) -> dict:
    """
    Worst-case distances between each relaxation value and the optimum.

    Returns:
        dict: "R" (sigma_max form, and the x_min / delta form when x_min is
        given), "M" and "Mc", each the minimum of the available ceilings, plus
        the individual terms under "terms".
    """
    n, s = inst.n, inst.s
    s_bar = inst.s_bar
    sigma = inst.sigma_max
    terms = {"R_sigma": n * np.log1p(s_bar * sigma ** 2 / (n * (1.0 + sigma)))}
    if x_min is not None and x_min > 0:
        terms["R_xmin"] = -n * np.log(x_min) + (n - s) * np.log1p(inst.delta)

    def m_terms(t):
        if t == 0:
            return 0.0, 0.0
        first = t * np.log(t - (t - 1) / t * max(2 * t - n, 0))
        second = t * np.log(t / n) + linalg.log_binom(n, t)
        return first, second

    terms["M_local"], terms["M_sampling"] = m_terms(s)
    terms["Mc_local"], terms["Mc_sampling"] = m_terms(n - s)
    return {
        "R": float(min(v for k, v in terms.items() if k.startswith("R_"))),
        "M": float(min(terms["M_local"], terms["M_sampling"])),
        "Mc": float(min(terms["Mc_local"], terms["Mc_sampling"])),
        "terms": {k: float(v) for k, v in terms.items()},
    }


@dataclass
class BoundReport:
    """Certified bounds from all three relaxations."""
    zR: float
    zM: float
    zMc: float
    points: dict
    certificates: dict
    lower_bound: float | None = None
    hint: str = ""

    @property
    def best(self) -> float:
        return min(self.zR, self.zM, self.zMc)

    def gaps(self) -> dict:
        if self.lower_bound is None:
            return {}
        return {name: getattr(self, "z" + name) - self.lower_bound for name in FORMULATIONS}

    def to_dict(self) -> dict:
        return {
            "zR": self.zR,
            "zM": self.zM,
            "zMc": self.zMc,
            "best": self.best,
            "lower_bound": self.lower_bound,
            "gaps": self.gaps(),
            "iterations": {k: p.iterations for k, p in self.points.items()},
            "certificates": {k: c.to_dict() for k, c in self.certificates.items()},
            "hint": self.hint,
        }


def formulation_hint(inst: DdfInstance) -> str:
    """Which relaxation tends to be tighter; advisory only."""
    if inst.sigma_max < 1.0:
        return "R"
    return "M" if inst.s <= inst.n / 2 else "Mc"


def compute_bounds(inst: DdfInstance, iters: int = 2000, tol: float = 1e-6, lower_bound=None) -> BoundReport:
    """
    Runs Frank-Wolfe on R, M and Mc and collects their certificates.

    Mc has nothing to exclude when s = n; its value is then the objective of
    the full set and it contributes no point or certificate.
    """
    points, certs = {}, {}
    for name in FORMULATIONS:
        if name == "Mc" and inst.s == inst.n:
            continue
        points[name], certs[name] = frank_wolfe(inst, name, budget_iters=iters, tol=tol)
    zMc = certs["Mc"].bound if "Mc" in certs else inst.objective(range(inst.n))
    return BoundReport(
        zR=certs["R"].bound,
        zM=certs["M"].bound,
        zMc=zMc,
        points=points,
        certificates=certs,
        lower_bound=lower_bound,
        hint=formulation_hint(inst),
    )
