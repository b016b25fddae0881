"""Stochastic discrete-time linear descriptor systems.

This module provides the structural core of the package:

* :class:`DescriptorSystem` — implicit systems ``E x_{k+1} = A x_k + B u_k + w_k``,
  ``y_k = C x_k + D u_k + v_k`` where ``E`` may be singular;
* :func:`check_regularity` — probabilistic regularity test of the pencil
  ``(z E - A)`` via determinant sampling;
* :func:`weierstrass_decompose` — quasi-Weierstrass decomposition into slow
  (causal) and fast (non-causal, nilpotent) subsystems via Wong-sequence
  subspace iteration;
* :func:`discretize_foh` — first-order-hold discretization of a continuous
  descriptor system, exact on the slow part, divided-difference rule on the
  fast part;
* :func:`sample_noise` / :func:`simulate` — reproducible noise realizations
  and simulation of consistent trajectories, including the anticipating fast
  response that reads inputs (and process noise) a few steps ahead.

The same :class:`DescriptorSystem` container is used for continuous-time and
discrete-time models; only :func:`discretize_foh` interprets its argument as
continuous.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConditioningError, InputError, StructuralError
from .linalg import complement_basis, null_basis, orth_basis, psd_factor, rank_threshold

__all__ = [
    "DescriptorSystem",
    "RegularityVerdict",
    "WeierstrassForm",
    "NoiseRealization",
    "Trajectory",
    "check_regularity",
    "weierstrass_decompose",
    "discretize_foh",
    "sample_noise",
    "simulate",
    "constant_input_equilibrium",
]


def _as_matrix(M, rows, cols, name):
    M = np.asarray(M, dtype=float)
    if M.shape != (rows, cols):
        raise InputError(f"{name} must have shape {(rows, cols)}, got {M.shape}")
    return M


def _check_psd(M, name, require_pd=False):
    if M.shape[0] == 0:
        return
    sym_err = np.max(np.abs(M - M.T)) if M.size else 0.0
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 0.0)
    if sym_err > 1e-10 * scale:
        raise InputError(f"{name} must be symmetric")
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    if w[0] < -1e-10 * max(1.0, w[-1]):
        raise InputError(f"{name} must be positive semidefinite (min eig {w[0]:.3e})")
    if require_pd and w[0] <= 0.0:
        raise InputError(f"{name} must be positive definite")


@dataclass(frozen=True)
class DescriptorSystem:
    """An implicit linear system with possibly singular descriptor matrix.

    Dynamics: ``E x_{k+1} = A x_k + B u_k + w_k`` with output
    ``y_k = C x_k + D u_k + v_k``; process noise ``w ~ N(0, Q_noise)`` and
    measurement noise ``v ~ N(0, R_noise)``.

    Attributes:
        E: Descriptor matrix, n-by-n, possibly singular.
        A: State matrix, n-by-n.
        B: Input matrix, n-by-m.
        C: Output matrix, p-by-n.
        D: Feedthrough matrix, p-by-m.
        Q_noise: Process-noise covariance, n-by-n, symmetric PSD.
        R_noise: Measurement-noise covariance, p-by-p, symmetric PSD.

    Instances are treated as immutable after construction; all operations in
    this package return new objects rather than mutating their inputs.
    """

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Q_noise: np.ndarray = None
    R_noise: np.ndarray = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InputError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float)
        if B.ndim != 2 or B.shape[0] != n:
            raise InputError(f"B must have {n} rows, got shape {B.shape}")
        m = B.shape[1]
        C = np.asarray(self.C, dtype=float)
        if C.ndim != 2 or C.shape[1] != n:
            raise InputError(f"C must have {n} columns, got shape {C.shape}")
        p = C.shape[0]
        E = _as_matrix(self.E, n, n, "E")
        D = _as_matrix(self.D, p, m, "D")
        Q = np.zeros((n, n)) if self.Q_noise is None else _as_matrix(self.Q_noise, n, n, "Q_noise")
        R = np.zeros((p, p)) if self.R_noise is None else _as_matrix(self.R_noise, p, p, "R_noise")
        _check_psd(Q, "Q_noise")
        _check_psd(R, "R_noise")
        for name, M in (("E", E), ("A", A), ("B", B), ("C", C), ("D", D),
                        ("Q_noise", Q), ("R_noise", R)):
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class RegularityVerdict:
    """Outcome of the sampled-determinant regularity test.

    ``det_magnitudes[i]`` is the magnitude of the determinant of the
    row-equilibrated pencil ``z_values[i] * E - A``; the pencil is declared
    regular as soon as any magnitude exceeds ``threshold``.
    """

    regular: bool
    z_values: np.ndarray
    det_magnitudes: np.ndarray
    threshold: float


def check_regularity(E, A, *, seed: int = 0, n_points: int | None = None,
                     threshold: float = 1e-12) -> RegularityVerdict:
    """Decide whether the matrix pencil ``(z E - A)`` is regular.

    The determinant of the pencil, as a polynomial in ``z``, is identically
    zero only for non-regular pencils.  Evaluating it at a handful of random
    complex points therefore decides regularity with probability one.  Each
    evaluation row-equilibrates ``z E - A`` first so the verdict does not
    depend on the (often wildly different) physical scales of the rows.

    Args:
        E, A: Square matrices of equal size.
        seed: Seed for the sample-point generator (deterministic verdicts).
        n_points: Number of sample points; defaults to ``n + 2``.
        threshold: Equilibrated-determinant magnitude above which the pencil
            counts as regular at a sample point.

    Returns:
        A :class:`RegularityVerdict` with the sampled points and magnitudes.
    """
    E = np.atleast_2d(np.asarray(E, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if E.shape != A.shape or E.shape[0] != E.shape[1]:
        raise InputError(f"E and A must be square with equal shapes, got {E.shape}, {A.shape}")
    n = E.shape[0]
    if n == 0:
        return RegularityVerdict(True, np.zeros(0, complex), np.zeros(0), threshold)
    k = n + 2 if n_points is None else int(n_points)
    rng = np.random.default_rng(seed)
    norm_E = np.linalg.norm(E)
    norm_A = np.linalg.norm(A)
    rho = 1.0
    if norm_E > 0 and norm_A > 0:
        rho = float(np.clip(norm_A / norm_E, 1e-3, 1e3))
    radii = rho * np.exp(rng.uniform(np.log(0.3), np.log(3.0), size=k))
    angles = rng.uniform(0.0, 2.0 * np.pi, size=k)
    zs = radii * np.exp(1j * angles)

    mags = np.zeros(k)
    for i, z in enumerate(zs):
        M = z * E - A
        row_norms = np.linalg.norm(M, axis=1)
        if np.any(row_norms == 0.0):
            mags[i] = 0.0
            continue
        sign, logdet = np.linalg.slogdet(M / row_norms[:, None])
        mags[i] = 0.0 if sign == 0 else float(np.exp(logdet))
    return RegularityVerdict(bool(np.any(mags > threshold)), zs, mags, threshold)


@dataclass(frozen=True)
class WeierstrassForm:
    """Quasi-Weierstrass decomposition data of a regular pencil.

    With invertible ``P`` and ``T``::

        P @ E @ T = blkdiag(I_{n_s}, N)      (N nilpotent, index s)
        P @ A @ T = blkdiag(J, I_{n_f})

    and the transformed input/output/noise blocks::

        [B_s; B_f] = P @ B,   [C_s, C_f] = C @ T,   Q_bar = P @ Q @ P.T

    ``L_bar`` is a full-column-rank factor with ``Q_bar = L_bar @ L_bar.T``,
    obtained by factoring ``Q`` before the transform so that no noise
    direction is lost to the scaling of ``P``.

    The slow subsystem ``x^s_{k+1} = J x^s_k + B_s u_k + w^s_k`` evolves
    causally; the fast subsystem resolves to the anticipating closed form::

        x^f_k = - sum_{i=0}^{s-1} N^i (B_f u_{k+i} + w^f_{k+i})

    ``n_f = 0`` is represented by empty fast blocks and ``s = 1``.
    """

    P: np.ndarray
    T: np.ndarray
    J: np.ndarray
    N: np.ndarray
    B_s: np.ndarray
    B_f: np.ndarray
    C_s: np.ndarray
    C_f: np.ndarray
    Q_bar: np.ndarray
    L_bar: np.ndarray
    n_s: int
    n_f: int
    s: int

    @property
    def n(self) -> int:
        return self.n_s + self.n_f

    @property
    def r_w(self) -> int:
        """Number of independent process-noise directions."""
        return self.L_bar.shape[1]

    def fast_input_maps(self) -> list[np.ndarray]:
        """The matrices ``N^i @ B_f`` for ``i = 0..s-1``."""
        maps = []
        Ni = np.eye(self.n_f)
        for _ in range(self.s):
            maps.append(Ni @ self.B_f)
            Ni = Ni @ self.N
        return maps

    def reassemble(self, D: np.ndarray | None = None):
        """Rebuild ``(E, A, B, C)`` in the original coordinates.

        Useful for verifying the decomposition: the result should match the
        matrices the form was computed from up to numerical round-off.
        """
        n_s, n_f = self.n_s, self.n_f
        E_t = np.zeros((self.n, self.n))
        E_t[:n_s, :n_s] = np.eye(n_s)
        E_t[n_s:, n_s:] = self.N
        A_t = np.zeros((self.n, self.n))
        A_t[:n_s, :n_s] = self.J
        A_t[n_s:, n_s:] = np.eye(n_f)
        B_t = np.vstack([self.B_s, self.B_f])
        C_t = np.hstack([self.C_s, self.C_f])
        P_inv = np.linalg.solve(self.P, np.eye(self.n))
        T_inv = np.linalg.solve(self.T, np.eye(self.n))
        E = P_inv @ E_t @ T_inv
        A = P_inv @ A_t @ T_inv
        B = P_inv @ B_t
        C = C_t @ T_inv
        return E, A, B, C


def _abs_null(M, atol):
    """Null-space basis with an absolute singular-value cutoff."""
    M = np.atleast_2d(M)
    if M.shape[1] == 0:
        return np.zeros((0, 0))
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    _, s, Vt = np.linalg.svd(M)
    r = int(np.sum(s > atol))
    return Vt[r:].T


def _abs_orth(M, atol):
    """Column-space basis with an absolute singular-value cutoff."""
    M = np.atleast_2d(M)
    if min(M.shape) == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    r = int(np.sum(s > atol))
    return U[:, :r]


def _abs_preimage(M, S, atol):
    """Basis of {x : M x in span(S)} with an absolute cutoff."""
    Q = _abs_orth(S, atol) if S.shape[1] else S
    if Q.shape[1] == 0:
        return _abs_null(M, atol)
    Cmp = complement_basis(Q, M.shape[0])
    if Cmp.shape[1] == 0:
        return np.eye(M.shape[1])
    return _abs_null(Cmp.T @ M, atol)


def weierstrass_decompose(sys: DescriptorSystem, rank_tol: float | None = None) -> WeierstrassForm:
    """Compute the quasi-Weierstrass form of a regular descriptor system.

    The invariant subspaces are obtained by Wong-sequence iteration:

    * ``V_0 = R^n``, ``V_{i+1} = {x : A x in E V_i}`` decreases to the slow
      subspace ``V*``;
    * ``W_0 = {0}``, ``W_{i+1} = {x : E x in A W_i}`` increases to the fast
      subspace ``W*``.

    For a regular pencil these satisfy ``V* (+) W* = R^n``; with orthonormal
    bases ``V`` and ``W`` the transformations are ``T = [V, W]`` and
    ``P = [E V, A W]^{-1}``.  The fast basis is chosen adapted to the
    increasing Wong filtration, which makes the stored ``N`` strictly block
    upper triangular -- exactly nilpotent -- by construction, with index
    ``s`` equal to the filtration length.

    Args:
        sys: The system whose pencil ``(E, A)`` is decomposed.
        rank_tol: Absolute singular-value cutoff for all subspace rank
            decisions; defaults to ``1e-9`` times the largest singular value
            of ``[E, A]``.

    Returns:
        A :class:`WeierstrassForm`.

    Raises:
        StructuralError: If the pencil is not regular (subspace dimensions do
            not add up, or the transformation matrices are singular).
    """
    E, A = sys.E, sys.A
    n = sys.n
    if rank_tol is None:
        stacked = np.hstack([E, A])
        rank_tol = 1e-9 * (np.linalg.svd(stacked, compute_uv=False)[0] if n else 1.0)

    # Wong sequence for the slow subspace (decreasing).
    V = np.eye(n)
    for _ in range(n + 1):
        V_next = _abs_preimage(A, E @ V, rank_tol)
        if V_next.shape[1] == V.shape[1]:
            V = V_next
            break
        V = V_next
    # Wong sequence for the fast subspace (increasing); keep the whole
    # filtration so the fast basis can be adapted to it below.
    W = np.zeros((n, 0))
    chain = []
    for _ in range(n + 1):
        W_next = _abs_preimage(E, A @ W, rank_tol)
        if W_next.shape[1] == W.shape[1]:
            break
        chain.append(W_next)
        W = W_next

    n_s = V.shape[1]
    n_f = W.shape[1]
    if n_s + n_f != n:
        raise StructuralError(
            f"pencil appears non-regular: slow dim {n_s} + fast dim {n_f} != {n}")

    # Fast basis adapted to the filtration: group i extends the span of the
    # previous groups to the i-th member of the chain.  Since E maps each
    # chain member into A times the previous one, the fast block of P E T is
    # strictly block upper triangular in this basis, hence exactly nilpotent
    # with index equal to the chain length.  (Recovering nilpotency from an
    # eigenvalue decomposition instead is hopeless: a perturbation eps of a
    # nilpotent block moves its eigenvalues by eps**(1/s).)
    groups = []
    W_cols = np.zeros((n, 0))
    for Wi in chain:
        M = Wi - W_cols @ (W_cols.T @ Wi)
        k_new = Wi.shape[1] - W_cols.shape[1]
        U = np.linalg.svd(M, full_matrices=False)[0]
        g = U[:, :k_new]
        groups.append(g)
        W_cols = np.hstack([W_cols, g])
    W = W_cols
    s_index = max(len(groups), 1)
    T = np.hstack([V, W])
    PI = np.hstack([E @ V, A @ W])  # this is P^{-1}
    sv_T = np.linalg.svd(T, compute_uv=False) if n else np.ones(1)
    sv_PI = np.linalg.svd(PI, compute_uv=False) if n else np.ones(1)
    if n and (sv_T[-1] <= rank_tol or sv_PI[-1] <= rank_tol):
        raise StructuralError(
            "pencil appears non-regular: transformation matrices are singular "
            f"(min singular values {sv_T[-1]:.3e}, {sv_PI[-1]:.3e})")
    P = np.linalg.solve(PI, np.eye(n))

    ET = P @ E @ T
    AT = P @ A @ T
    J = AT[:n_s, :n_s].copy()
    N_raw = ET[n_s:, n_s:].copy()

    # Zero everything outside the structurally-allowed blocks (row group i,
    # column group j with j > i); what gets dropped is rounding noise.
    if n_f > 0:
        sizes = [g.shape[1] for g in groups]
        edges = np.concatenate([[0], np.cumsum(sizes)])
        mask = np.zeros((n_f, n_f), dtype=bool)
        for i in range(len(sizes)):
            for j in range(i + 1, len(sizes)):
                mask[edges[i]:edges[i + 1], edges[j]:edges[j + 1]] = True
        dropped = np.where(mask, 0.0, np.abs(N_raw)).max()
        scale = max(1.0, float(np.abs(N_raw).max()))
        if dropped > 1e-6 * scale:
            raise StructuralError(
                "fast block is not nilpotent; pencil structure is inconsistent "
                f"(largest off-pattern entry {dropped:.3e})")
        N = np.where(mask, N_raw, 0.0)
    else:
        N = np.zeros((0, 0))

    PB = P @ sys.B
    CT = sys.C @ T
    Q_bar = P @ sys.Q_noise @ P.T
    # Factor the covariance in original coordinates first: rank is invariant
    # under the congruence with P, but factoring Q_bar directly can lose
    # genuine noise directions when P is badly scaled.
    L_q, _ = psd_factor(sys.Q_noise)
    return WeierstrassForm(
        P=P, T=T, J=J, N=N,
        B_s=PB[:n_s, :], B_f=PB[n_s:, :],
        C_s=CT[:, :n_s], C_f=CT[:, n_s:],
        Q_bar=0.5 * (Q_bar + Q_bar.T),
        L_bar=P @ L_q,
        n_s=n_s, n_f=n_f, s=s_index,
    )


def discretize_foh(sys: DescriptorSystem, h: float,
                   rank_tol: float | None = None) -> DescriptorSystem:
    """Discretize a continuous-time descriptor system under a first-order hold.

    The system is first decomposed.  The slow subsystem is discretized
    exactly for piecewise-linear inputs: with ``Phi = expm(J h)``,
    ``M1 = int_0^h expm(J t) dt`` and ``M2 = int_0^h expm(J t) t dt`` the
    update ``x_{k+1} = Phi x_k + (M2/h) B u_k + (M1 - M2/h) B u_{k+1}`` is
    made causal by the usual state shift, which moves a ``C_s G1`` term into
    the feedthrough.  The fast subsystem ``N xdot = x + B_f u`` maps the time
    derivative to the forward divided difference ``(u_{k+1} - u_k)/h``,
    giving the discrete fast chain::

        N_d = (h I + N)^{-1} N,    B_fd = h (h I + N)^{-1} B_f

    with the same nilpotency index as ``N``.  The composite is reassembled in
    the original coordinates through ``P^{-1} = [E V, A W]``, which preserves
    the row scaling of the original physical equations; the noise covariances
    are carried over unchanged and are interpreted as discrete-time
    covariances of the resulting system.

    Args:
        sys: Continuous-time descriptor system.
        h: Sampling period, strictly positive.
        rank_tol: Passed through to :func:`weierstrass_decompose`.

    Returns:
        The discrete-time :class:`DescriptorSystem`.
    """
    if not h > 0.0:
        raise InputError(f"sampling period must be positive, got {h}")
    wf = weierstrass_decompose(sys, rank_tol)
    n_s, n_f = wf.n_s, wf.n_f
    n = sys.n

    # Slow part: Van Loan block-exponential for Phi, M1 and h*M1 - M2.
    if n_s > 0:
        Zb = np.zeros((3 * n_s, 3 * n_s))
        Zb[:n_s, :n_s] = wf.J
        Zb[:n_s, n_s:2 * n_s] = np.eye(n_s)
        Zb[n_s:2 * n_s, 2 * n_s:] = np.eye(n_s)
        ez = scipy.linalg.expm(Zb * h)
        Phi = ez[:n_s, :n_s]
        M1 = ez[:n_s, n_s:2 * n_s]
        hM1_minus_M2 = ez[:n_s, 2 * n_s:]
        G1 = (hM1_minus_M2 / h) @ wf.B_s
        G0 = (M1 - hM1_minus_M2 / h) @ wf.B_s
        A_sd = Phi
        B_sd = Phi @ G1 + G0
        D_shift = wf.C_s @ G1
    else:
        A_sd = np.zeros((0, 0))
        B_sd = np.zeros((0, sys.m))
        D_shift = np.zeros((sys.p, sys.m))

    # Fast part: divided-difference chain.
    if n_f > 0:
        hIN = h * np.eye(n_f) + wf.N
        N_d = np.linalg.solve(hIN, wf.N)
        B_fd = h * np.linalg.solve(hIN, wf.B_f)
    else:
        N_d = np.zeros((0, 0))
        B_fd = np.zeros((0, sys.m))

    E_t = np.zeros((n, n))
    E_t[:n_s, :n_s] = np.eye(n_s)
    E_t[n_s:, n_s:] = N_d
    A_t = np.zeros((n, n))
    A_t[:n_s, :n_s] = A_sd
    A_t[n_s:, n_s:] = np.eye(n_f)
    B_t = np.vstack([B_sd, B_fd])

    P_inv = np.linalg.solve(wf.P, np.eye(n))
    T_inv = np.linalg.solve(wf.T, np.eye(n))
    E_d = P_inv @ E_t @ T_inv
    A_d = P_inv @ A_t @ T_inv
    B_d = P_inv @ B_t
    C_d = sys.C.copy()
    D_d = sys.D + D_shift
    return DescriptorSystem(E=E_d, A=A_d, B=B_d, C=C_d, D=D_d,
                            Q_noise=sys.Q_noise.copy(), R_noise=sys.R_noise.copy())


@dataclass(frozen=True)
class NoiseRealization:
    """A reproducible noise draw for one simulation run.

    Attributes:
        eps: Standard-normal driving sequence, shape ``(K + s + 1, r_w)``
            for a length-``K`` simulation; process noise in transformed
            coordinates is ``w_bar_k = factor_L @ eps_k``.
        v: Measurement-noise sequence, shape ``(K, p)``.
        seed: The seed the realization was drawn from.
        r_w: Rank of the transformed process-noise covariance ``Q_bar``.
        factor_L: Full-column-rank factor with ``factor_L @ factor_L.T ==
            Q_bar``; the first ``n_s`` rows drive the slow subsystem, the
            remaining ``n_f`` rows the fast one.
        n_s: Row split between the slow and fast blocks of ``factor_L``.
    """

    eps: np.ndarray
    v: np.ndarray
    seed: int
    r_w: int
    factor_L: np.ndarray
    n_s: int

    @property
    def L_s(self) -> np.ndarray:
        return self.factor_L[:self.n_s, :]

    @property
    def L_f(self) -> np.ndarray:
        return self.factor_L[self.n_s:, :]


def sample_noise(sys: DescriptorSystem, wf: WeierstrassForm, length: int,
                 seed: int) -> NoiseRealization:
    """Draw a noise realization long enough for a length-``length`` run.

    Uses numpy's ``default_rng`` (PCG64) with ziggurat standard normals; the
    draw order is fixed and documented — first the ``eps`` block of shape
    ``(length + s + 1, r_w)``, then the raw measurement block of shape
    ``(length, p)`` — so a given seed always reproduces the same arrays.
    Process noise is generated through the decomposition's ``L_bar`` factor,
    which stays well defined when the covariance is singular.
    """
    if length < 0:
        raise InputError("length must be nonnegative")
    rng = np.random.default_rng(seed)
    L, r_w = wf.L_bar, wf.r_w
    eps = rng.standard_normal((length + wf.s + 1, r_w))
    Lr, _ = psd_factor(sys.R_noise)
    v_raw = rng.standard_normal((length, Lr.shape[1]))
    v = v_raw @ Lr.T if Lr.shape[1] else np.zeros((length, sys.p))
    return NoiseRealization(eps=eps, v=v, seed=seed, r_w=r_w, factor_L=L, n_s=wf.n_s)


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed input/output (and optionally state) records.

    All present sequences have one row per time step and equal length.
    """

    u: np.ndarray
    y: np.ndarray
    x: np.ndarray | None = None

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if u.shape[0] != y.shape[0]:
            raise InputError(
                f"u and y must have equal length, got {u.shape[0]} and {y.shape[0]}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)
        if self.x is not None:
            x = np.atleast_2d(np.asarray(self.x, dtype=float))
            if x.shape[0] != u.shape[0]:
                raise InputError("x must have the same length as u and y")
            object.__setattr__(self, "x", x)

    def __len__(self) -> int:
        return self.u.shape[0]


def simulate(sys: DescriptorSystem, wf: WeierstrassForm, u: np.ndarray,
             noise: NoiseRealization | None = None,
             x0_slow: np.ndarray | None = None,
             length: int | None = None, with_state: bool = True) -> Trajectory:
    """Simulate a consistent trajectory of a discrete descriptor system.

    The slow state is propagated recursively; the fast state is evaluated
    through its anticipating closed form, which consumes ``s - 1`` input
    samples (and ``s`` process-noise samples) beyond the requested length.
    The initial fast state is therefore automatically consistent with the
    inputs and noise.

    Args:
        sys: The (discrete-time) system, used for ``D`` and dimensions.
        wf: Its quasi-Weierstrass form.
        u: Input sequence of shape ``(K + s - 1, m)`` or longer.
        noise: Optional noise realization covering the same extended range
            (``eps`` needs at least ``K + s - 1`` rows, ``v`` at least ``K``);
            omit for a noise-free run.
        x0_slow: Initial slow state (defaults to zero).
        length: Requested trajectory length ``K``; defaults to
            ``len(u) - s + 1``.
        with_state: Also record the full descriptor state ``x = T [x^s; x^f]``.

    Returns:
        A :class:`Trajectory` of length ``K``.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != sys.m:
        raise InputError(f"u must have {sys.m} columns, got {u.shape[1]}")
    s = wf.s
    K = u.shape[0] - s + 1 if length is None else int(length)
    if K < 0:
        raise InputError("requested length is negative")
    if u.shape[0] < K + s - 1:
        raise InputError(
            f"input too short: need {K + s - 1} samples for length {K} with s={s}, "
            f"got {u.shape[0]}")
    n_s, n_f = wf.n_s, wf.n_f
    if x0_slow is None:
        x0_slow = np.zeros(n_s)
    x0_slow = np.asarray(x0_slow, dtype=float).reshape(-1)
    if x0_slow.shape[0] != n_s:
        raise InputError(f"x0_slow must have length {n_s}, got {x0_slow.shape[0]}")

    if noise is not None:
        if noise.eps.shape[0] < K + s - 1:
            raise InputError(
                f"noise.eps too short: need {K + s - 1} rows, got {noise.eps.shape[0]}")
        if noise.v.shape[0] < K:
            raise InputError(f"noise.v too short: need {K} rows, got {noise.v.shape[0]}")
        w_s = noise.eps @ noise.L_s.T   # slow process noise per step
        w_f = noise.eps @ noise.L_f.T   # fast process noise per step
        v = noise.v
    else:
        w_s = np.zeros((K + s - 1, n_s))
        w_f = np.zeros((K + s - 1, n_f))
        v = np.zeros((K, sys.p))

    # Slow recursion.
    xs = np.zeros((K, n_s))
    if n_s > 0 and K > 0:
        xs[0] = x0_slow
        for k in range(K - 1):
            xs[k + 1] = wf.J @ xs[k] + wf.B_s @ u[k] + w_s[k]

    # Fast closed form: x^f_k = -sum_i N^i (B_f u_{k+i} + w^f_{k+i}).
    xf = np.zeros((K, n_f))
    if n_f > 0 and K > 0:
        Ni = np.eye(n_f)
        for i in range(s):
            NiBf = Ni @ wf.B_f
            xf -= u[i:i + K] @ NiBf.T + w_f[i:i + K] @ Ni.T
            Ni = wf.N @ Ni

    y = xs @ wf.C_s.T + xf @ wf.C_f.T + u[:K] @ sys.D.T + v[:K]
    x = None
    if with_state:
        x = np.hstack([xs, xf]) @ wf.T.T
    return Trajectory(u=u[:K].copy(), y=y, x=x)


def constant_input_equilibrium(sys: DescriptorSystem, u_const: np.ndarray,
                               rtol: float = 1e-10):
    """Equilibrium state and output for a constant input.

    For a continuous-time system the equilibrium solves ``A x = -B u``; for
    a discrete-time system obtained by exact discretization of such an
    equilibrium-compatible system the same pair is the fixed point, so this
    helper serves both.

    Args:
        sys: The system (``A`` must be nonsingular, i.e. no pencil
            eigenvalue at zero).
        u_const: Constant input ``(m,)``.
        rtol: Residual check threshold, relative to the problem scale.

    Returns:
        Tuple ``(x_eq, y_eq)``.

    Raises:
        StructuralError: If ``A`` is singular or the residual check fails.
    """
    u_const = np.atleast_1d(np.asarray(u_const, dtype=float))
    if u_const.shape != (sys.m,):
        raise InputError(f"u_const must have shape ({sys.m},)")
    try:
        x_eq = np.linalg.solve(sys.A, -sys.B @ u_const)
    except np.linalg.LinAlgError:
        raise StructuralError(
            "no constant-input equilibrium: A is singular") from None
    scale = max(1.0, float(np.abs(sys.B @ u_const).max()))
    resid = float(np.abs(sys.A @ x_eq + sys.B @ u_const).max())
    if resid > rtol * scale:
        raise StructuralError(
            f"equilibrium residual {resid:.3e} exceeds {rtol:.1e} * {scale:.3e}")
    y_eq = sys.C @ x_eq + sys.D @ u_const
    return x_eq, y_eq
