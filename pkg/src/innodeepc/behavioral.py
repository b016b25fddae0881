"""Hankel matrices, excitation tests, and data-span membership checks.

These are the data-side prerequisites of direct data-driven prediction: a
block-Hankel constructor, persistency-of-excitation rank tests (for a single
signal and for a stacked input/innovation pair), a data-driven reachability
certificate built from a shifted Hankel-matrix pencil, and a check that a
candidate input/output window lies in the span of the columns harvested from
recorded data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InputError, PreconditionError
from .linalg import RANK_RTOL, numeric_rank

__all__ = [
    "block_hankel",
    "ExcitationReport",
    "is_persistently_exciting",
    "combined_excitation_check",
    "PencilRankReport",
    "r_controllability_test",
    "MembershipReport",
    "behavior_membership",
]


def block_hankel(data: np.ndarray, depth: int) -> np.ndarray:
    """Block-Hankel matrix with ``depth`` block rows.

    Args:
        data: Signal samples, shape ``(T, q)`` (a 1-D array is treated as
            ``(T, 1)``).
        depth: Number of stacked samples per column, ``1 <= depth <= T``.

    Returns:
        Array of shape ``(depth * q, T - depth + 1)`` whose column ``j``
        stacks ``data[j], ..., data[j + depth - 1]``.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if data.ndim != 2:
        raise InputError(f"signal must be 1-D or 2-D, got shape {data.shape}")
    T, q = data.shape
    if not 1 <= depth <= T:
        raise InputError(f"depth must be in [1, {T}], got {depth}")
    cols = T - depth + 1
    H = np.empty((depth * q, cols))
    for i in range(depth):
        H[i * q:(i + 1) * q, :] = data[i:i + cols].T
    return H


@dataclass(frozen=True)
class ExcitationReport:
    """Outcome of a persistency-of-excitation rank test.

    Attributes:
        satisfied: True when the Hankel matrix has full row rank.
        order: Tested excitation order (block-row depth).
        rank: Numerical rank found.
        required_rank: Full row rank that would certify excitation.
        smallest_kept: Smallest singular value counted toward the rank
            (0.0 when the matrix is rank deficient beyond the requirement).
        threshold: Singular-value cutoff used.
    """

    satisfied: bool
    order: int
    rank: int
    required_rank: int
    smallest_kept: float
    threshold: float

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        verdict = "satisfied" if self.satisfied else "NOT satisfied"
        return (f"excitation order {self.order}: {verdict} "
                f"(rank {self.rank}/{self.required_rank})")


def _excitation_from_hankel(H: np.ndarray, order: int) -> ExcitationReport:
    required = H.shape[0]
    rank, sv, threshold = numeric_rank(H)
    satisfied = rank >= required
    smallest = float(sv[required - 1]) if satisfied and required > 0 else 0.0
    return ExcitationReport(
        satisfied=bool(satisfied), order=order, rank=rank,
        required_rank=required, smallest_kept=smallest, threshold=threshold)


def is_persistently_exciting(data: np.ndarray, order: int) -> ExcitationReport:
    """Test persistency of excitation of a signal at a given order.

    A signal ``(T, q)`` is persistently exciting of order ``L`` when its
    depth-``L`` block-Hankel matrix has full row rank ``q * L``.
    """
    H = block_hankel(data, order)
    return _excitation_from_hankel(H, order)


def combined_excitation_check(u: np.ndarray, e: np.ndarray,
                              order: int) -> ExcitationReport:
    """Joint excitation test on an input signal stacked with innovations.

    Builds depth-``order`` block-Hankel matrices of both signals over the
    same column range and requires the stack to have full row rank
    ``(m + p) * order``.  This is the condition under which recorded data
    spans every admissible input/innovation/output window; it is demanding --
    the stacked matrix needs at least ``(m + p + 1) * order - 1`` samples and
    the innovation rows are not free to choose -- so callers typically treat
    a failure as a warning rather than an error.
    """
    u = np.asarray(u, dtype=float)
    e = np.asarray(e, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if e.ndim == 1:
        e = e[:, None]
    T = min(u.shape[0], e.shape[0])
    H = np.vstack([block_hankel(u[:T], order), block_hankel(e[:T], order)])
    return _excitation_from_hankel(H, order)


@dataclass(frozen=True)
class PencilRankReport:
    """Rank profile of the shifted-Hankel data pencil.

    Attributes:
        verdict: True when the pencil has the expected rank at every
            evaluation point.
        expected_rank: Rank certifying reachability of the dynamic part,
            ``m * (depth + anticipation - 1) + slow_dim``.
        lambdas: Complex evaluation points, shape ``(n_points,)``.
        ranks: Numerical rank of the pencil at each point.
        depth: Block-row depth of the Hankel matrices.
        rtol: Relative singular-value cutoff used for the ranks.
    """

    verdict: bool
    expected_rank: int
    lambdas: np.ndarray
    ranks: np.ndarray
    depth: int
    rtol: float

    @property
    def failed_points(self) -> np.ndarray:
        """Evaluation points where the rank deviates from the expectation."""
        return self.lambdas[self.ranks != self.expected_rank]

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        verdict = "reachable" if self.verdict else "NOT reachable"
        return (f"shifted-pencil rank test at depth {self.depth}: {verdict} "
                f"({len(self.lambdas)} points, expected rank "
                f"{self.expected_rank})")


def _complex_rank(M: np.ndarray, rtol: float) -> int:
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.count_nonzero(sv > sv[0] * max(M.shape) * rtol))


def r_controllability_test(u: np.ndarray, y: np.ndarray, depth: int,
                           slow_dim: int, anticipation: int = 1, *,
                           rtol: float = RANK_RTOL, n_probe: int = 32,
                           seed: int = 0) -> PencilRankReport:
    """Data-driven reachability certificate for the dynamic (slow) part.

    From one recorded input/output trajectory, build the one-step-shifted
    block-Hankel pairs ``(U0, U1)`` and ``(Y0, Y1)`` at the given depth and
    evaluate the rank of the pencil ``[U1; Y1] - lambda * [U0; Y0]``.  The
    dynamic part of the generating system is reachable exactly when this rank
    equals ``m * (depth + anticipation - 1) + slow_dim`` for every complex
    ``lambda``.  The rank can only drop on a finite set, so the test
    evaluates the finite generalized eigenvalues of an SVD-compressed square
    version of the pencil (where any drop must show up) plus pseudo-random
    annulus probes and ``{0, 1}`` to pin the generic rank.

    Args:
        u: Recorded inputs, shape ``(T + 1, m)``.
        y: Recorded outputs, shape ``(T + 1, p)``.
        depth: Block-row depth of the Hankel matrices (at least 1).
        slow_dim: Dimension of the dynamic part of the generating system.
        anticipation: Nilpotency index of the generating system (1 for a
            causal state-space system).
        rtol: Relative singular-value cutoff for the rank decisions.  The
            default suits noise-free data; loosen it for noisy records.
        n_probe: Number of pseudo-random annulus probe points.
        seed: Seed for the probe points.

    Returns:
        A :class:`PencilRankReport` covering every evaluated point.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if anticipation < 1:
        raise InputError(f"anticipation must be >= 1, got {anticipation}")
    if depth < 1:
        raise InputError(f"depth must be >= 1, got {depth}")
    n_samples = min(u.shape[0], y.shape[0])
    if n_samples < depth + 1:
        raise InputError(
            f"need at least depth + 1 = {depth + 1} samples, got {n_samples}")
    m = u.shape[1]

    U0 = block_hankel(u[:n_samples - 1], depth)
    U1 = block_hankel(u[1:n_samples], depth)
    Y0 = block_hankel(y[:n_samples - 1], depth)
    Y1 = block_hankel(y[1:n_samples], depth)
    M0 = np.vstack([U0, Y0])
    M1 = np.vstack([U1, Y1])
    expected = m * (depth + anticipation - 1) + slow_dim

    # Compress the rectangular pencil to a square one sharing its finite
    # rank-drop points: project onto the joint row space of (M0, M1) and the
    # joint column space, then take generalized eigenvalues.
    q = min(M0.shape)
    left, _, _ = np.linalg.svd(np.hstack([M1, M0]), full_matrices=False)
    left = left[:, :q]
    _, _, right_t = np.linalg.svd(np.vstack([M1, M0]), full_matrices=False)
    right = right_t[:q].T
    eigs = scipy.linalg.eigvals(left.T @ M1 @ right, left.T @ M0 @ right)

    candidates: list[complex] = [0.0 + 0.0j, 1.0 + 0.0j]
    candidates.extend(
        complex(z) for z in eigs if np.isfinite(z) and abs(z) < 1e9)
    rng = np.random.default_rng(seed)
    radii = np.exp(rng.uniform(np.log(1e-2), np.log(10.0), size=n_probe))
    angles = rng.uniform(0.0, 2.0 * np.pi, size=n_probe)
    candidates.extend(radii * np.exp(1j * angles))

    lambdas = np.asarray(candidates, dtype=complex)
    ranks = np.asarray(
        [_complex_rank(M1 - lam * M0, rtol) for lam in lambdas], dtype=int)
    return PencilRankReport(
        verdict=bool(np.all(ranks == expected)), expected_rank=expected,
        lambdas=lambdas, ranks=ranks, depth=depth, rtol=float(rtol))


@dataclass(frozen=True)
class MembershipReport:
    """Outcome of a data-span membership check for one trajectory window.

    Attributes:
        member: True when the window is in the span of the data columns.
        residual: Relative least-squares residual of the best match.
        tolerance: Residual threshold applied.
        excitation: Excitation report for the recorded input at the order
            needed for the test to be conclusive.
    """

    member: bool
    residual: float
    tolerance: float
    excitation: ExcitationReport


def behavior_membership(u_data: np.ndarray, y_data: np.ndarray,
                        u_win: np.ndarray, y_win: np.ndarray,
                        anticipation: int = 1, state_bound: int | None = None,
                        tolerance: float = 1e-6) -> MembershipReport:
    """Check whether an input/output window lies in the span of recorded data.

    Stacks depth-``L`` block-Hankel matrices of the recorded input and
    output and asks whether the candidate window (both signals of length
    ``L``) is a linear combination of their columns.  Because the output of
    an anticipating system reads inputs up to ``anticipation - 1`` steps
    ahead, the last ``anticipation`` recorded samples have incomplete future
    input information and are dropped from both signals before building the
    Hankel matrices.  The window is declared a member of the data span when
    the least-squares residual is below ``tolerance`` (relative to the
    window norm).

    Args:
        u_data: Recorded inputs ``(T, m)``.
        y_data: Recorded outputs ``(T, p)``.
        u_win: Candidate input window ``(L, m)``.
        y_win: Candidate output window ``(L, p)``.
        anticipation: Nilpotency index ``s`` of the generating system (1 for
            a causal state-space system).
        state_bound: Dynamic order margin for the excitation precondition:
            ``slow_dim + anticipation - 1`` when the structure is known, or
            the full state dimension as a conservative upper bound.  When
            given, the recorded input must be persistently exciting of order
            ``L + state_bound`` or a :class:`PreconditionError` is raised;
            when omitted the excitation report is computed at order ``L``
            and failures are left to the caller.
        tolerance: Relative residual threshold.

    Returns:
        A :class:`MembershipReport`.

    Raises:
        PreconditionError: If ``state_bound`` is given and the recorded
            input fails the excitation test, making the span inconclusive.
    """
    u_data = np.atleast_2d(np.asarray(u_data, dtype=float))
    y_data = np.atleast_2d(np.asarray(y_data, dtype=float))
    u_win = np.atleast_2d(np.asarray(u_win, dtype=float))
    y_win = np.atleast_2d(np.asarray(y_win, dtype=float))
    if anticipation < 1:
        raise InputError(f"anticipation must be >= 1, got {anticipation}")
    L = y_win.shape[0]
    if u_win.shape[0] != L:
        raise InputError(
            f"input and output windows must both have {L} samples, got "
            f"{u_win.shape[0]} and {L}")
    used = min(u_data.shape[0], y_data.shape[0]) - anticipation
    if used < L:
        raise InputError(
            f"recorded data supports windows up to {max(used, 0)} samples "
            f"after dropping {anticipation} trailing samples, requested {L}")

    pe_order = L + (state_bound or 0)
    excitation = is_persistently_exciting(u_data, pe_order)
    if state_bound is not None and not excitation.satisfied:
        raise PreconditionError(
            f"recorded input is not persistently exciting of order "
            f"{pe_order} (rank {excitation.rank}/{excitation.required_rank});"
            f" the membership test would be inconclusive")

    H = np.vstack(
        [block_hankel(u_data[:used], L), block_hankel(y_data[:used], L)])
    w = np.concatenate([u_win.ravel(), y_win.ravel()])
    g, *_ = np.linalg.lstsq(H, w, rcond=None)
    residual = float(np.linalg.norm(H @ g - w))
    denom = float(np.linalg.norm(w)) or 1.0
    rel = residual / denom
    return MembershipReport(
        member=bool(rel <= tolerance), residual=rel, tolerance=tolerance,
        excitation=excitation)
