"""
Problem data for D-optimal data fusion.

A DdfInstance bundles the existing Fisher information matrix C, the candidate
columns A and the budget s, together with every derived factorization the
relaxations and cuts need (B, M = I + B^T B, V, U, Q and a few constants).
Instances are immutable once built.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from . import linalg
from .exceptions import (
    BadBudget,
    BadDimensions,
    DimensionMismatch,
    InputError,
    NotPositiveDefinite,
    ParseError,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Selection:
    """A cardinality-s index set (sorted, 0-based) and its objective value."""
    indices: tuple
    objective: float

    def as_list(self) -> list[int]:
        return [int(i) for i in self.indices]

    def mask(self, n: int) -> np.ndarray:
        x = np.zeros(n)
        x[list(self.indices)] = 1.0
        return x


@dataclass(frozen=True, eq=False)
class DdfInstance:
    """
    Problem data (C, A, s) with derived factorizations.

    Attributes:
        B: columns b_i = C^{-1/2} a_i.
        G: Gram matrix B^T B = A^T C^{-1} A.
        M: I_n + G.
        V: upper-triangular factor with V^T V = M (columns v_i).
        U: upper-triangular factor with U^T U = M^{-1} (columns u_i, complement form).
        Q: columns q_i = (C + A A^T)^{-1/2} a_i.
        sigma_max: max_i a_i^T C^{-1} a_i.
        delta: lambda_max(B^T B).
    """
    d: int
    n: int
    s: int
    C: np.ndarray
    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    M: np.ndarray
    V: np.ndarray
    U: np.ndarray
    Q: np.ndarray
    logdet_C: float
    logdet_CAA: float
    logdet_M: float
    sigma_max: float
    delta: float
    zero_columns: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def s_bar(self) -> int:
        return min(self.s, self.n - self.s)

    def with_budget(self, s: int) -> "DdfInstance":
        """Same data, different budget; a MESP offset is rescaled to the new s."""
        meta = dict(self.meta)
        if "log_lambda_min" in meta:
            meta["offset"] = s * meta["log_lambda_min"]
        return build(self.C, self.A, s, meta=meta)

    def objective(self, S) -> float:
        """
        ldet(C + sum_{i in S} a_i a_i^T), computed as ldet C + ldet(I + G_{S,S}).
        """
        idx = np.asarray(sorted(S), dtype=int)
        if idx.size == 0:
            return self.logdet_C
        return self.logdet_C + linalg.logdet_spd(self.M[np.ix_(idx, idx)])

    def objective_dense(self, S) -> float:
        """Same value as objective(), computed directly in dimension d."""
        idx = np.asarray(sorted(S), dtype=int)
        A_S = self.A[:, idx]
        return linalg.logdet_spd(self.C + A_S @ A_S.T)

    def selection(self, S) -> Selection:
        idx = tuple(sorted(int(i) for i in S))
        if len(idx) != self.s or len(set(idx)) != self.s:
            raise InputError(f"selection must contain {self.s} distinct indices, got {list(idx)}")
        if idx and (idx[0] < 0 or idx[-1] >= self.n):
            raise InputError(f"selection indices must lie in 0..{self.n - 1}")
        return Selection(indices=idx, objective=self.objective(idx))

    def fingerprint(self) -> str:
        """Stable hash of (C, A, s) used to identify instances in reports."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.C).tobytes())
        h.update(np.ascontiguousarray(self.A).tobytes())
        h.update(str(self.s).encode())
        return h.hexdigest()[:16]

    def descriptor(self) -> dict:
        return {
            "d": self.d,
            "n": self.n,
            "s": self.s,
            "fingerprint": self.fingerprint(),
            "meta": dict(self.meta),
        }


# -----------------------------------------------------------------------------
# Construction
# -----------------------------------------------------------------------------

def build(C, A, s: int, meta: dict | None = None) -> DdfInstance:
    """
    Validates (C, A, s) and computes every derived quantity.

    Args:
        C: d x d positive-definite existing FIM.
        A: d x n matrix of candidate columns a_i.
        s: Budget, 1 <= s <= n.
        meta: Free-form metadata carried into reports.

    Returns:
        DdfInstance: The immutable instance.

    Raises:
        BadDimensions: If shapes disagree.
        BadBudget: If s is outside 1..n.
        NotPositiveDefinite: If C is not positive-definite.
    """
    try:
        C = linalg.as_sym(C)
    except ValueError as exc:
        raise BadDimensions(f"C: {exc}") from exc
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2 or A.shape[0] != C.shape[0]:
        raise BadDimensions(f"A has shape {A.shape}, expected ({C.shape[0]}, n)")
    if not np.all(np.isfinite(A)):
        raise BadDimensions("A has non-finite entries")
    d, n = A.shape
    s = int(s)
    if s < 1 or s > n:
        raise BadBudget(f"budget s={s} must satisfy 1 <= s <= n={n}")

    L_C = linalg.cholesky(C)
    logdet_C = float(2.0 * np.sum(np.log(np.diag(L_C))))

    B = linalg.inv_sqrt_spd(C) @ A
    G = B.T @ B
    G = 0.5 * (G + G.T)
    AtCinvA = A.T @ scipy.linalg.cho_solve((L_C, True), A)
    if np.linalg.norm(G - AtCinvA) > 1e-7 * (1.0 + np.linalg.norm(AtCinvA)):
        raise NotPositiveDefinite(message="C is too ill-conditioned to whiten the candidate columns")

    M = np.eye(n) + G
    V = linalg.cholesky(M).T
    M_inv = scipy.linalg.cho_solve((V.T, True), np.eye(n))
    U = linalg.cholesky(0.5 * (M_inv + M_inv.T)).T

    CAA = C + A @ A.T
    logdet_CAA = linalg.logdet_spd(CAA)
    Q = linalg.inv_sqrt_spd(CAA) @ A
    q_top = linalg.eigvals_desc(Q @ Q.T)[0] if n else 0.0
    if q_top >= 1.0 - 1e-10:
        raise NotPositiveDefinite(message=f"sum q_i q_i^T has eigenvalue {q_top:.12f} >= 1")

    sigma = np.diag(G)
    zero_columns = tuple(int(i) for i in np.flatnonzero(np.all(A == 0.0, axis=0)))
    if zero_columns:
        logger.warning("instance has %d zero candidate column(s): %s", len(zero_columns), list(zero_columns))

    return DdfInstance(
        d=d,
        n=n,
        s=s,
        C=C,
        A=A,
        B=B,
        G=G,
        M=M,
        V=V,
        U=U,
        Q=Q,
        logdet_C=logdet_C,
        logdet_CAA=logdet_CAA,
        logdet_M=float(2.0 * np.sum(np.log(np.diag(V)))),
        sigma_max=float(np.max(sigma)),
        delta=float(max(linalg.eigvals_desc(G)[0], 0.0)),
        zero_columns=zero_columns,
        meta=dict(meta or {}),
    )


def from_mesp(C_mesp, s: int) -> tuple[DdfInstance, float]:
    """
    Reduces maximum-entropy sampling on covariance C_mesp to a DDF instance.

    With F^T F = C_mesp / lambda_min - I, every |S| = s satisfies
    ldet (C_mesp)_{S,S} = objective(S) + offset, offset = s * log(lambda_min).

    Returns:
        tuple[DdfInstance, float]: (instance with C = I_n and a_i = f_i, offset).
    """
    C_mesp = linalg.as_sym(C_mesp)
    lam = linalg.eigvals_desc(C_mesp)
    lam_min = lam[-1]
    if lam_min <= linalg.PD_RTOL * max(lam[0], 0.0) or lam[0] <= 0.0:
        raise NotPositiveDefinite(message="covariance matrix must be positive-definite")
    n = C_mesp.shape[0]
    F = linalg.psd_factor(C_mesp / lam_min - np.eye(n))
    log_lam = float(np.log(lam_min))
    offset = s * log_lam
    inst = build(np.eye(n), F, s, meta={"source": "mesp", "offset": offset, "log_lambda_min": log_lam})
    return inst, offset


@dataclass(frozen=True)
class ComplementR:
    """Data of the complementary R formulation: exclude n - s columns q_i."""
    constant: float
    Q: np.ndarray

    def objective(self, excluded) -> float:
        idx = np.asarray(sorted(excluded), dtype=int)
        d = self.Q.shape[0]
        Q_T = self.Q[:, idx]
        return self.constant + linalg.logdet_spd(np.eye(d) - Q_T @ Q_T.T)


def to_complement_r(inst: DdfInstance) -> ComplementR:
    """objective(S) = ldet(C + A A^T) + ldet(I_d - sum_{i not in S} q_i q_i^T)."""
    return ComplementR(constant=inst.logdet_CAA, Q=inst.Q)


def complement_m_objective(inst: DdfInstance, excluded) -> float:
    """objective([n] \\ T) = ldet(C + A A^T) + ldet((M^{-1})_{T,T}) for the excluded set T."""
    idx = np.asarray(sorted(excluded), dtype=int)
    if idx.size == 0:
        return inst.logdet_CAA
    K = inst.U.T @ inst.U
    return inst.logdet_CAA + linalg.logdet_spd(K[np.ix_(idx, idx)])


# -----------------------------------------------------------------------------
# Generators
# -----------------------------------------------------------------------------

def gen_random(d: int, n: int, s: int, seed: int) -> DdfInstance:
    """C = G^T G + I_d with Gaussian G, Gaussian A; fully determined by seed."""
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((d, d))
    C = G.T @ G + np.eye(d)
    A = rng.standard_normal((d, n))
    return build(C, A, s, meta={"generator": "random", "seed": int(seed)})


def gen_pmu(C, sigma_hat, s: int) -> DdfInstance:
    """
    PMU placement: candidate i adds (1 / sigma_hat_i^2) e_i e_i^T to the grid FIM C.

    Raises:
        InputError: If any sigma_hat_i <= 0 or its length differs from dim C.
    """
    C = linalg.as_sym(C)
    sigma_hat = np.asarray(sigma_hat, dtype=float).ravel()
    if sigma_hat.size == 1:
        sigma_hat = np.full(C.shape[0], float(sigma_hat[0]))
    if sigma_hat.size != C.shape[0]:
        raise BadDimensions(f"need {C.shape[0]} PMU deviations, got {sigma_hat.size}")
    if np.any(sigma_hat <= 0.0):
        raise InputError("PMU standard deviations must be positive")
    return build(C, np.diag(1.0 / sigma_hat), s, meta={"generator": "pmu"})


# -----------------------------------------------------------------------------
# File I/O
# -----------------------------------------------------------------------------

def read_csv_matrix(path, shape: tuple | None = None) -> np.ndarray:
    """
    Reads a comma-separated matrix (one row per line, no header).

    Raises:
        ParseError: If the file is missing or not numeric.
        DimensionMismatch: If shape is given and does not match.
    """
    path = Path(path)
    try:
        M = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except (OSError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if shape is not None and M.shape != tuple(shape):
        raise DimensionMismatch(f"{path}: expected shape {tuple(shape)}, got {M.shape}")
    return M


def write_csv_matrix(path, M) -> None:
    np.savetxt(path, np.atleast_2d(M), delimiter=",", fmt="%.17g")


def _matrix_field(doc: dict, key: str, shape: tuple, base_dir: Path) -> np.ndarray:
    value = doc.get(key)
    if value is None:
        raise ParseError(f"instance document lacks '{key}'")
    if isinstance(value, str):
        path = Path(value)
        if not path.is_absolute():
            path = base_dir / path
        return read_csv_matrix(path, shape)
    try:
        M = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"'{key}' is not a numeric array") from exc
    if M.shape != shape:
        raise DimensionMismatch(f"'{key}': expected shape {shape}, got {M.shape}")
    return M


def instance_from_dict(doc: dict, base_dir=".") -> DdfInstance:
    """Builds an instance from a parsed instance document."""
    if not isinstance(doc, dict):
        raise ParseError("instance document must be a JSON object")
    try:
        d, n, s = int(doc["d"]), int(doc["n"]), int(doc["s"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"instance header needs integer d, n, s ({exc})") from exc
    base_dir = Path(base_dir)
    C = _matrix_field(doc, "C", (d, d), base_dir)
    A = _matrix_field(doc, "A", (d, n), base_dir)
    return build(C, A, s, meta=doc.get("meta") or {})


def instance_to_dict(inst: DdfInstance) -> dict:
    return {
        "format": FORMAT_VERSION,
        "d": inst.d,
        "n": inst.n,
        "s": inst.s,
        "C": inst.C.tolist(),
        "A": inst.A.tolist(),
        "meta": dict(inst.meta),
    }


def load(path) -> DdfInstance:
    """
    Loads an instance JSON file; C and A may be inline arrays or CSV paths
    relative to the JSON file.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    return instance_from_dict(doc, base_dir=path.parent)


def save(inst: DdfInstance, path) -> None:
    """Writes the instance JSON; floats are written with round-trip precision."""
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1))
