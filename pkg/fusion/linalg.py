"""
Dense symmetric linear-algebra kernels.

Factorizations, eigendecompositions, log-determinants, rank-one updates and
elementary symmetric polynomials. Everything here is a pure function of its
inputs; arrays passed in are never modified.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg import lapack
from scipy.special import gammaln, logsumexp

from .exceptions import NoConvergence, NotPositiveDefinite, SingularUpdate

logger = logging.getLogger(__name__)

SymMatrix = np.ndarray

PD_RTOL = 1e-12
SYM_RTOL = 1e-12
LOG_SWITCH = 1e300


@dataclass(frozen=True)
class EigenPair:
    """Eigenvalues sorted descending with the matching orthonormal eigenvectors as columns."""
    values: np.ndarray
    vectors: np.ndarray


# -----------------------------------------------------------------------------
# Validation
# -----------------------------------------------------------------------------

def as_sym(M) -> SymMatrix:
    """
    Converts M to a float array and checks it is square, finite and symmetric.

    Args:
        M (array_like): Candidate symmetric matrix.

    Returns:
        np.ndarray: The validated matrix with its two triangles averaged.

    Raises:
        ValueError: If M is not square, not finite or not symmetric.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if np.any(np.abs(M - M.T) > SYM_RTOL * (1.0 + np.abs(M))):
        raise ValueError("matrix is not symmetric")
    return 0.5 * (M + M.T)


# -----------------------------------------------------------------------------
# Factorizations
# -----------------------------------------------------------------------------

def cholesky(M) -> np.ndarray:
    """
    Lower-triangular Cholesky factor L with L @ L.T == M.

    A leading pivot no larger than 1e-12 * trace(M) / dim counts as zero.

    Raises:
        NotPositiveDefinite: With the 0-based index of the failing pivot.
    """
    M = as_sym(M)
    dim = M.shape[0]
    tol = PD_RTOL * max(np.trace(M), 0.0) / dim
    c, info = lapack.dpotrf(M, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefinite(pivot=int(info) - 1)
    if info < 0:
        raise ValueError(f"dpotrf rejected argument {-info}")
    L = np.tril(c)
    pivots = np.diag(L) ** 2
    bad = np.flatnonzero(pivots <= tol)
    if bad.size:
        raise NotPositiveDefinite(pivot=int(bad[0]))
    return L


def logdet_spd(M) -> float:
    """Natural log-determinant of a positive-definite matrix, 2 * sum(log diag(L))."""
    L = cholesky(M)
    return float(2.0 * np.sum(np.log(np.diag(L))))


def sym_eig(M) -> EigenPair:
    """
    Symmetric eigendecomposition with eigenvalues in descending order.

    Raises:
        NoConvergence: If the LAPACK driver fails to converge.
    """
    M = as_sym(M)
    try:
        values, vectors = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return EigenPair(values=values[::-1].copy(), vectors=vectors[:, ::-1].copy())


def eigvals_desc(M) -> np.ndarray:
    """Eigenvalues only, descending."""
    try:
        values = np.linalg.eigvalsh(as_sym(M))
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return values[::-1].copy()


def inv_sqrt_spd(M) -> SymMatrix:
    """
    M^{-1/2} = Q diag(lambda^{-1/2}) Q^T.

    Raises:
        NotPositiveDefinite: If lambda_min <= 1e-12 * lambda_max.
    """
    eig = sym_eig(M)
    lam_max = eig.values[0]
    if eig.values[-1] <= PD_RTOL * max(lam_max, 0.0) or lam_max <= 0.0:
        raise NotPositiveDefinite(message="inverse square root needs a positive-definite matrix")
    X = (eig.vectors / np.sqrt(eig.values)) @ eig.vectors.T
    return 0.5 * (X + X.T)


def psd_factor(M) -> np.ndarray:
    """
    A square factor F with F.T @ F == M for a positive-semidefinite M.

    Eigenvalues at or below 1e-12 * lambda_max are treated as exact zeros, so the
    corresponding rows of F vanish.
    """
    eig = sym_eig(M)
    lam = eig.values.copy()
    scale = max(lam[0], 0.0)
    if lam[-1] < -1e-9 * max(scale, 1.0):
        raise NotPositiveDefinite(message="matrix has a negative eigenvalue")
    lam[lam <= PD_RTOL * scale] = 0.0
    return np.sqrt(lam)[:, None] * eig.vectors.T


# -----------------------------------------------------------------------------
# Rank-one updates
# -----------------------------------------------------------------------------

def rank_one_logdet_update(logdet: float, Minv, b, sign: int = 1) -> tuple[float, SymMatrix]:
    """
    Log-determinant and inverse of M + sign * b b^T from those of M.

    Uses the matrix determinant lemma and the Sherman-Morrison formula.

    Args:
        logdet (float): ldet(M).
        Minv (np.ndarray): M^{-1}.
        b (np.ndarray): Update vector.
        sign (int): +1 to add b b^T, -1 to remove it.

    Returns:
        tuple[float, np.ndarray]: (new logdet, new inverse).

    Raises:
        SingularUpdate: If 1 + sign * b^T M^{-1} b <= 1e-12.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    b = np.asarray(b, dtype=float)
    u = Minv @ b
    denom = 1.0 + sign * float(b @ u)
    if denom <= 1e-12:
        raise SingularUpdate(f"1 {'+' if sign > 0 else '-'} b'M^-1 b = {denom:.3e}")
    new_inv = Minv - sign * np.outer(u, u) / denom
    return logdet + float(np.log(denom)), 0.5 * (new_inv + new_inv.T)


class InverseTracker:
    """
    Tracks (M, M^{-1}, ldet M) under a sequence of signed rank-one updates.

    The inverse and log-determinant are recomputed from scratch every
    `refresh` updates to bound Sherman-Morrison drift.
    """

    def __init__(self, M, refresh: int = 64):
        self.M = as_sym(M).copy()
        self.refresh = max(int(refresh), 1)
        self.updates = 0
        self._recompute()

    def _recompute(self):
        L = cholesky(self.M)
        self.logdet = float(2.0 * np.sum(np.log(np.diag(L))))
        eye = np.eye(self.M.shape[0])
        self.inv = scipy.linalg.cho_solve((L, True), eye)
        self.inv = 0.5 * (self.inv + self.inv.T)

    def update(self, b, sign: int = 1) -> float:
        """Applies M += sign * b b^T and returns the new log-determinant."""
        b = np.asarray(b, dtype=float)
        self.logdet, self.inv = rank_one_logdet_update(self.logdet, self.inv, b, sign)
        self.M += sign * np.outer(b, b)
        self.updates += 1
        if self.updates % self.refresh == 0:
            drifted = self.logdet
            self._recompute()
            if abs(drifted - self.logdet) > 1e-8 * (1.0 + abs(self.logdet)):
                logger.warning("rank-one drift %.3e corrected at refresh", abs(drifted - self.logdet))
        return self.logdet


# -----------------------------------------------------------------------------
# Elementary symmetric polynomials
# -----------------------------------------------------------------------------

def elem_sym_table(y, k: int) -> np.ndarray:
    """
    Table E[j, m] = e_j(y_0, ..., y_{m-1}) for j <= k, m <= len(y).

    Newton-triangle recursion over prefixes: E[j, m] = E[j, m-1] + y_{m-1} E[j-1, m-1].
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    E = np.zeros((k + 1, n + 1))
    E[0, :] = 1.0
    for m in range(1, n + 1):
        E[1:, m] = E[1:, m - 1] + y[m - 1] * E[:-1, m - 1]
    return E


def log_elem_sym_table(y, k: int) -> np.ndarray:
    """Log-space version of elem_sym_table for nonnegative y; log 0 is -inf."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("log-scaled elementary symmetric polynomials need nonnegative input")
    n = y.size
    with np.errstate(divide="ignore"):
        logy = np.log(y)
    L = np.full((k + 1, n + 1), -np.inf)
    L[0, :] = 0.0
    for m in range(1, n + 1):
        L[1:, m] = np.logaddexp(L[1:, m - 1], logy[m - 1] + L[:-1, m - 1])
    return L


def elem_sym_poly(y, k: int) -> float:
    """
    Degree-k elementary symmetric polynomial e_k(y).

    e_0 = 1, and e_k = 0 for k > len(y). Switches to log space when an intermediate
    exceeds 1e300.
    """
    y = np.asarray(y, dtype=float)
    if k == 0:
        return 1.0
    if k < 0 or k > y.size:
        return 0.0
    E = elem_sym_table(y, k)
    if np.all(np.isfinite(E)) and np.max(np.abs(E)) <= LOG_SWITCH:
        return float(E[k, -1])
    return float(np.exp(log_elem_sym_poly(y, k)))


def log_elem_sym_poly(y, k: int) -> float:
    """log e_k(y) for nonnegative y (-inf when e_k(y) = 0)."""
    y = np.asarray(y, dtype=float)
    if k == 0:
        return 0.0
    if k < 0 or k > y.size:
        return -np.inf
    return float(log_elem_sym_table(y, k)[k, -1])


def sum_principal_minors(M, k: int) -> float:
    """Sum of all k x k principal minors of symmetric M, computed as e_k of its eigenvalues."""
    return elem_sym_poly(eigvals_desc(M), k)


def logdet_s(Lam, s: int) -> float:
    """
    Sum of the logs of the s least eigenvalues of a positive-definite Lam.

    Eigenvalues below 1e-14 are floored to 1e-14; flooring only raises the
    resulting dual bound, so it stays valid.
    """
    values = eigvals_desc(Lam)[::-1][:s]
    if np.any(values < 1e-14):
        logger.warning("flooring %d eigenvalue(s) below 1e-14 in logdet_s", int(np.sum(values < 1e-14)))
        values = np.maximum(values, 1e-14)
    return float(np.sum(np.log(values)))


def log_binom(n: int, k: int) -> float:
    """log C(n, k) through log-gamma."""
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def log_mean_exp(values) -> float:
    """log(mean(exp(values))) without overflow."""
    values = np.asarray(values, dtype=float)
    return float(logsumexp(values) - np.log(values.size))
