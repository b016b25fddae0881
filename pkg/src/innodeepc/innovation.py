"""Causal augmented form of a descriptor system and its innovation filter.

A regular descriptor system with nilpotency index ``s`` anticipates inputs
and process noise up to ``s - 1`` steps ahead.  Augmenting the slow state
with the next ``s + 1`` white-noise seeds turns it into an ordinary causal
state-space model driven by one fresh seed per step:

* state ``xi_k = [x^s_k; eps_k; ...; eps_{k+s}]`` of dimension
  ``n_s + (s + 1) r_w``,
* ``xi_{k+1} = A xi_k + B u_k + G eps_{k+s+1}``,
* ``y_k - d_k = C xi_k + v_k`` where ``d_k`` collects the deterministic
  feedthrough of current and future inputs.

On this form the usual steady-state one-step-ahead filter applies, and its
innovation sequence is the minimal unpredictable part of the output -- the
quantity the data-driven predictor later treats as a measured signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .descriptor import DescriptorSystem, WeierstrassForm
from .errors import ConvergenceError, InputError

__all__ = [
    "AugmentedModel",
    "build_augmented",
    "deterministic_compensation",
    "simulate_augmented",
    "KalmanFilter",
    "solve_steady_kalman",
    "kalman_innovations",
]


@dataclass(frozen=True)
class AugmentedModel:
    """Causal state-space form of a descriptor system with noise seeds.

    Attributes:
        A, B, G, C: State-space matrices; the process noise enters as
            ``G eps`` with ``eps`` a unit-covariance white seed.
        R: Measurement-noise covariance.
        D: Original direct feedthrough (part of the deterministic
            compensation, not of ``C``).
        wf: Underlying quasi-Weierstrass form (kept for the input
            compensation and for dimensions).
        r_w: Rank of the process-noise covariance (seed dimension).
    """

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    C: np.ndarray
    R: np.ndarray
    D: np.ndarray
    wf: WeierstrassForm = field(repr=False)
    r_w: int

    @property
    def n_xi(self) -> int:
        return self.A.shape[0]

    @property
    def s(self) -> int:
        return self.wf.s

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def noise_factor(self) -> np.ndarray:
        """The factor ``L = [L_s; L_f]`` of the transformed covariance."""
        return self._L

    def __post_init__(self):
        L, r = self.wf.L_bar, self.wf.r_w
        if r != self.r_w:
            raise InputError(
                f"noise factor rank {r} does not match declared r_w {self.r_w}")
        object.__setattr__(self, "_L", L)


def build_augmented(sys_or_wf, D: np.ndarray | None = None,
                    R: np.ndarray | None = None) -> AugmentedModel:
    """Build the causal augmented model of a discrete descriptor system.

    Args:
        sys_or_wf: Either a :class:`DescriptorSystem` (its quasi-Weierstrass
            form is computed) or an existing :class:`WeierstrassForm`.
        D: Direct feedthrough; required when a bare form is passed.
        R: Measurement-noise covariance; required when a bare form is passed.

    Returns:
        The :class:`AugmentedModel`.
    """
    if isinstance(sys_or_wf, DescriptorSystem):
        from .descriptor import weierstrass_decompose

        wf = weierstrass_decompose(sys_or_wf)
        D = sys_or_wf.D if D is None else np.asarray(D, dtype=float)
        R = sys_or_wf.R_noise if R is None else np.asarray(R, dtype=float)
    else:
        wf = sys_or_wf
        if D is None or R is None:
            raise InputError("D and R are required with a bare decomposition")
        D = np.asarray(D, dtype=float)
        R = np.asarray(R, dtype=float)

    L, r_w = wf.L_bar, wf.r_w
    n_s, n_f, s = wf.n_s, wf.n_f, wf.s
    L_s, L_f = L[:n_s], L[n_s:]
    p = D.shape[0]
    m = D.shape[1]
    n_eta = (s + 1) * r_w
    n_xi = n_s + n_eta

    A = np.zeros((n_xi, n_xi))
    A[:n_s, :n_s] = wf.J
    # Slow state consumes the oldest stored seed.
    A[:n_s, n_s:n_s + r_w] = L_s
    # Seed buffer shifts up by one block.
    A[n_s:n_s + s * r_w, n_s + r_w:] = np.eye(s * r_w)

    B = np.vstack([wf.B_s, np.zeros((n_eta, m))])
    G = np.zeros((n_xi, r_w))
    G[n_s + s * r_w:, :] = np.eye(r_w)

    # Output: C_s on the slow state, and the anticipating fast response to
    # the stored seeds: x^f_k = -sum_i N^i L_f eps_{k+i}.
    C = np.zeros((p, n_xi))
    C[:, :n_s] = wf.C_s
    Ni = np.eye(n_f)
    for i in range(s):
        C[:, n_s + i * r_w:n_s + (i + 1) * r_w] = -wf.C_f @ Ni @ L_f
        Ni = Ni @ wf.N
    # The (s+1)-th stored block only feeds the shift register (N^s = 0).

    return AugmentedModel(A=A, B=B, G=G, C=C, R=R.copy(), D=D.copy(),
                          wf=wf, r_w=r_w)


def deterministic_compensation(model: AugmentedModel,
                               u: np.ndarray) -> np.ndarray:
    """Deterministic output feedthrough of current and future inputs.

    ``d_k = D u_k - C_f sum_{i<s} N^i B_f u_{k+i}``; subtracting it from the
    measured output leaves the part explained by the augmented state and the
    measurement noise.

    Args:
        model: The augmented model.
        u: Inputs of shape ``(K + s - 1, m)`` or longer.

    Returns:
        Array ``(K, p)`` with ``K = len(u) - s + 1``.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    s = model.s
    K = u.shape[0] - s + 1
    if K < 1:
        raise InputError(
            f"need at least {s} input samples, got {u.shape[0]}")
    d = u[:K] @ model.D.T
    wf = model.wf
    for i, NiBf in enumerate(wf.fast_input_maps()):
        d -= u[i:i + K] @ (wf.C_f @ NiBf).T
    return d


def simulate_augmented(model: AugmentedModel, u: np.ndarray,
                       eps: np.ndarray, v: np.ndarray,
                       x0_slow: np.ndarray | None = None) -> np.ndarray:
    """Run the augmented recursion; exact mirror of the descriptor simulation.

    Args:
        model: The augmented model.
        u: Inputs ``(K + s - 1, m)`` or longer.
        eps: Unit-covariance seeds, at least ``(K + s, r_w)``.
        v: Measurement noise ``(K, p)`` or longer.
        x0_slow: Initial slow state (defaults to zero).

    Returns:
        Output sequence ``(K, p)``.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    s, r_w, n_s = model.s, model.r_w, model.wf.n_s
    K = u.shape[0] - s + 1
    if K < 1:
        raise InputError(f"need at least {s} input samples, got {u.shape[0]}")
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if eps.shape[0] < K + s or eps.shape[1] != r_w:
        raise InputError(
            f"eps must be at least ({K + s}, {r_w}), got {eps.shape}")
    if v.shape[0] < K:
        raise InputError(f"v must cover {K} samples, got {v.shape[0]}")

    xi = np.zeros(model.n_xi)
    if x0_slow is not None:
        xi[:n_s] = np.asarray(x0_slow, dtype=float)
    xi[n_s:] = eps[:s + 1].ravel()
    d = deterministic_compensation(model, u)
    y = np.empty((K, model.p))
    for k in range(K):
        y[k] = model.C @ xi + d[k] + v[k]
        if k + 1 < K:
            xi = model.A @ xi + model.B @ u[k] + model.G @ eps[k + s + 1]
    return y


@dataclass(frozen=True)
class KalmanFilter:
    """Steady-state one-step-ahead filter for an augmented model.

    Attributes:
        K: Predictor gain (applied to the innovation in the time update).
        P: Steady-state one-step prediction error covariance.
        S: Innovation covariance ``C P C' + R``.
        iterations: Riccati iterations to convergence.
    """

    K: np.ndarray
    P: np.ndarray
    S: np.ndarray
    iterations: int


def solve_steady_kalman(model: AugmentedModel, rtol: float = 1e-12,
                        max_iter: int = 100_000) -> KalmanFilter:
    """Fixed-point iteration for the steady-state prediction covariance.

    Iterates ``P <- A P A' - A P C' (C P C' + R)^{-1} C P A' + G G'`` from
    ``P = 0`` until the update is below ``rtol`` relative to ``P``.

    Raises:
        ConvergenceError: If the iteration has not settled after
            ``max_iter`` steps (e.g. an undetectable unstable mode).
    """
    A, C, G = model.A, model.C, model.G
    R = model.R
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise InputError(
            "measurement-noise covariance must be positive definite for the "
            "steady-state filter") from None
    W = G @ G.T
    P = np.zeros_like(A)
    for it in range(1, max_iter + 1):
        S = C @ P @ C.T + R
        K = np.linalg.solve(S, C @ P @ A.T).T
        P_next = A @ P @ A.T - K @ S @ K.T + W
        P_next = 0.5 * (P_next + P_next.T)
        delta = np.abs(P_next - P).max()
        P = P_next
        if delta <= rtol * max(1.0, np.abs(P).max()):
            S = C @ P @ C.T + R
            K = np.linalg.solve(S, C @ P @ A.T).T
            return KalmanFilter(K=K, P=P, S=0.5 * (S + S.T), iterations=it)
    raise ConvergenceError(
        f"steady-state filter iteration did not converge in {max_iter} steps "
        f"(last update {delta:.3e})")


def kalman_innovations(model: AugmentedModel, kf: KalmanFilter,
                       u: np.ndarray, y: np.ndarray,
                       xi0: np.ndarray | None = None) -> np.ndarray:
    """Innovation sequence of the steady-state filter on recorded data.

    Args:
        model: The augmented model.
        kf: Steady-state filter gains.
        u: Inputs ``(K + s - 1, m)`` or longer.
        y: Measured outputs ``(K, p)``.
        xi0: Initial predicted state (defaults to zero).

    Returns:
        Innovations ``(K, p)``: ``e_k = y_k - d_k - C xi_hat_k``.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    K_steps = y.shape[0]
    if u.shape[0] < K_steps + model.s - 1:
        raise InputError(
            f"need {K_steps + model.s - 1} input samples, got {u.shape[0]}")
    d = deterministic_compensation(model, u[:K_steps + model.s - 1])
    xi = np.zeros(model.n_xi) if xi0 is None else np.asarray(xi0, dtype=float)
    e = np.empty((K_steps, model.p))
    for k in range(K_steps):
        e[k] = y[k] - d[k] - model.C @ xi
        xi = model.A @ xi + model.B @ u[k] + kf.K @ e[k]
    return e
