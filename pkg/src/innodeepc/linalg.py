"""Small SVD-based subspace helpers shared by several modules.

All rank decisions in the package go through :func:`numeric_rank` so that the
thresholding rule (and the guard against borderline singular values) lives in
exactly one place.
"""

from __future__ import annotations

import numpy as np

from .errors import RankAmbiguityError

#: Default relative rank tolerance: ``sigma_max * max(shape) * RANK_RTOL``.
RANK_RTOL = 1e-12

#: Singular values within this factor of the threshold (on either side) are
#: considered too close to call.
AMBIGUITY_BAND = 10.0


def rank_threshold(s: np.ndarray, shape, rtol: float = RANK_RTOL) -> float:
    """Absolute cutoff below which singular values count as zero."""
    if s.size == 0:
        return 0.0
    return float(s[0]) * max(shape) * rtol


def numeric_rank(M: np.ndarray, rtol: float = RANK_RTOL, *, strict: bool = False):
    """Numerical rank of ``M`` plus the singular values used to decide it.

    Returns ``(rank, s, threshold)``.  With ``strict=True`` a
    :class:`RankAmbiguityError` is raised when any singular value falls inside
    the ambiguity band around the threshold, listing the offending values.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if min(M.shape) == 0:
        return 0, np.zeros(0), 0.0
    s = np.linalg.svd(M, compute_uv=False)
    thr = rank_threshold(s, M.shape, rtol)
    if strict and thr > 0.0:
        near = s[(s > thr / AMBIGUITY_BAND) & (s < thr * AMBIGUITY_BAND)]
        if near.size:
            raise RankAmbiguityError(
                "rank decision ambiguous: singular values %s sit near the "
                "threshold %.3e" % (np.array2string(near, precision=3), thr),
                borderline=near,
            )
    return int(np.sum(s > thr)), s, thr


def orth_basis(M: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis (columns) of the column space of ``M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if min(M.shape) == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    r = int(np.sum(s > rank_threshold(s, M.shape, rtol)))
    return U[:, :r]


def null_basis(M: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis (columns) of the right null space of ``M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[1]
    if n == 0:
        return np.zeros((0, 0))
    if M.shape[0] == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(M)
    r = int(np.sum(s > rank_threshold(s, M.shape, rtol)))
    return Vt[r:].T


def complement_basis(Q: np.ndarray, n: int) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``span(Q)`` in R^n."""
    if Q.shape[1] == 0:
        return np.eye(n)
    U, s, _ = np.linalg.svd(Q, full_matrices=True)
    r = int(np.sum(s > rank_threshold(s, Q.shape)))
    return U[:, r:]


def preimage(M: np.ndarray, S: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Basis of ``{x : M x in span(S)}``.

    ``S`` may have zero columns, in which case this is the null space of
    ``M``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[1] == 0:
        return null_basis(M, rtol)
    Q = orth_basis(S, rtol)
    C = complement_basis(Q, M.shape[0])
    if C.shape[1] == 0:
        # span(S) is everything; no constraint on x.
        return np.eye(M.shape[1])
    return null_basis(C.T @ M, rtol)


def psd_factor(Q: np.ndarray, rtol: float = 1e-10):
    """Factor a symmetric PSD matrix as ``Q = L @ L.T`` with ``L`` of full
    column rank, via an eigendecomposition.

    Eigenvalues below ``rtol * lambda_max`` are treated as zero, so this works
    for singular covariance matrices where a Cholesky factorization would
    fail.  Returns ``(L, rank)``.
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    if n == 0 or not np.any(Q):
        return np.zeros((n, 0)), 0
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    lam_max = float(w[-1])
    if lam_max <= 0.0:
        return np.zeros((n, 0)), 0
    keep = w > rtol * lam_max
    L = V[:, keep] * np.sqrt(w[keep])
    # Order columns from largest eigenvalue down, for determinism.
    return L[:, ::-1], int(np.sum(keep))
