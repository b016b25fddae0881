"""Small dense quadratic programs with exact active-set termination.

Solves ``min 0.5 z' H z + f' z`` subject to box bounds and general linear
inequalities ``A z <= b`` for symmetric positive definite ``H``.  The solver
is a dual active-set method: it starts from the unconstrained minimizer and
adds one violated constraint at a time while keeping the current iterate
optimal for the constraints accumulated so far, so no feasible starting
point is needed and termination yields exact KKT conditions (up to linear
solves).  Infeasibility shows up as an unbounded dual step and is reported
through the result status rather than an exception.

The problems this package generates are small (tens of variables), so the
working-set matrices are refactored from scratch every iteration; this keeps
the implementation short and easy to audit at negligible cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, InputError

__all__ = ["QPResult", "solve_qp", "solve_box_qp"]


@dataclass(frozen=True)
class QPResult:
    """Solution report for a quadratic program.

    Attributes:
        z: Minimizer (None when the constraints are inconsistent).
        value: Objective at ``z`` (None when infeasible).
        status: ``"optimal"`` or ``"infeasible"``.
        active: Indices of active constraint rows (in the stacked internal
            ordering: general rows first, then lower bounds, then upper).
        multipliers: Nonnegative multipliers for the active rows.
        iterations: Number of active-set changes performed.
        kkt_residual: Max-norm of the stationarity residual at ``z``.
    """

    z: np.ndarray | None
    value: float | None
    status: str
    active: tuple[int, ...]
    multipliers: np.ndarray
    iterations: int
    kkt_residual: float


def _stack_constraints(n, A, b, lower, upper):
    """Return (C, d) for the internal form ``C z >= d``."""
    rows = []
    rhs = []
    if A is not None:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if A.shape[1] != n or A.shape[0] != b.shape[0]:
            raise InputError(
                f"inequality shapes {A.shape} and {b.shape} do not match "
                f"{n} variables")
        rows.append(-A)
        rhs.append(-b)
    if lower is not None:
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (n,))
        keep = np.isfinite(lower)
        rows.append(np.eye(n)[keep])
        rhs.append(lower[keep])
    if upper is not None:
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (n,))
        keep = np.isfinite(upper)
        rows.append(-np.eye(n)[keep])
        rhs.append(-upper[keep])
    if not rows:
        return np.zeros((0, n)), np.zeros(0)
    return np.vstack(rows), np.concatenate(rhs)


def solve_qp(H: np.ndarray, f: np.ndarray, A: np.ndarray | None = None,
             b: np.ndarray | None = None, lower=None, upper=None,
             tol: float = 1e-10, max_iter: int | None = None) -> QPResult:
    """Minimize ``0.5 z' H z + f' z`` over ``A z <= b``, ``lower <= z <= upper``.

    Args:
        H: Symmetric positive definite ``(n, n)``.
        f: Linear term ``(n,)``.
        A, b: Optional general inequalities ``A z <= b``.
        lower, upper: Optional bounds (scalars or ``(n,)``; entries may be
            ``+-inf``).
        tol: Constraint-violation threshold, relative to the problem scale.
        max_iter: Cap on active-set changes (default ``50 * n_con + 100``).

    Returns:
        A :class:`QPResult`; ``status == "infeasible"`` when the constraint
        set is empty.

    Raises:
        InputError: If ``H`` is not symmetric positive definite or shapes
            are inconsistent.
        ConvergenceError: If the active-set iteration cycles beyond the cap.
    """
    H = np.asarray(H, dtype=float)
    f = np.atleast_1d(np.asarray(f, dtype=float))
    n = f.shape[0]
    if H.shape != (n, n):
        raise InputError(f"H must be ({n}, {n}), got {H.shape}")
    if np.abs(H - H.T).max() > 1e-10 * max(1.0, np.abs(H).max()):
        raise InputError("H must be symmetric")
    try:
        chol = scipy.linalg.cho_factor(H)
    except scipy.linalg.LinAlgError:
        raise InputError("H must be positive definite") from None

    C, d = _stack_constraints(n, A, b, lower, upper)
    n_con = C.shape[0]
    if max_iter is None:
        max_iter = 50 * n_con + 100

    z = -scipy.linalg.cho_solve(chol, f)
    scale = max(1.0, float(np.abs(d).max()) if n_con else 1.0,
                float(np.abs(z).max()))
    feas_tol = tol * scale

    active: list[int] = []
    u = np.zeros(0)
    iterations = 0

    while True:
        viol = d - C @ z if n_con else np.zeros(0)
        if n_con == 0 or viol.max() <= feas_tol:
            break
        p = int(np.argmax(viol))

        # Inner loop: push constraint p in, dropping dual-blocked rows.
        # The multiplier of p accumulates over partial steps.
        u_p = 0.0
        while True:
            iterations += 1
            if iterations > max_iter:
                raise ConvergenceError(
                    f"active-set iteration exceeded {max_iter} steps")
            cp = C[p]
            Hinv_cp = scipy.linalg.cho_solve(chol, cp)
            if active:
                N = C[active].T
                Hinv_N = scipy.linalg.cho_solve(chol, N)
                # r: rate of decrease of active multipliers per unit of the
                # new one; zdir: primal motion per unit of the new one.
                S = N.T @ Hinv_N
                r = np.linalg.solve(S, N.T @ Hinv_cp)
                zdir = Hinv_cp - Hinv_N @ r
            else:
                r = np.zeros(0)
                zdir = Hinv_cp

            denom = float(cp @ zdir)
            gap = float(d[p] - cp @ z)
            t_full = gap / denom if denom > tol else np.inf
            t_dual = np.inf
            j_block = -1
            for idx, j in enumerate(active):
                if r[idx] > tol:
                    cand = u[idx] / r[idx]
                    if cand < t_dual:
                        t_dual = cand
                        j_block = idx
            t = min(t_full, t_dual)
            if not np.isfinite(t):
                # No primal progress possible and no multiplier to trade:
                # the constraints are inconsistent.
                return QPResult(
                    z=None, value=None, status="infeasible",
                    active=tuple(active), multipliers=u.copy(),
                    iterations=iterations, kkt_residual=np.inf)

            z = z + t * zdir
            if active:
                u = u - t * r
            u_p += t
            if t_full <= t_dual:
                active.append(p)
                u = np.append(u, u_p)
                break
            active.pop(j_block)
            u = np.delete(u, j_block)

    grad = H @ z + f
    if active:
        grad = grad - C[active].T @ u
    kkt = float(np.abs(grad).max())
    value = float(0.5 * z @ H @ z + f @ z)
    return QPResult(
        z=z, value=value, status="optimal", active=tuple(active),
        multipliers=u.copy(), iterations=iterations, kkt_residual=kkt)


def solve_box_qp(H: np.ndarray, f: np.ndarray, lower, upper,
                 **kwargs) -> QPResult:
    """Minimize ``0.5 z' H z + f' z`` subject to ``lower <= z <= upper``."""
    return solve_qp(H, f, lower=lower, upper=upper, **kwargs)
