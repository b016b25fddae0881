"""Innovation estimation by autoregression with future inputs.

Given recorded input/output data from a system whose output anticipates
inputs by up to ``s - 1`` steps, the one-step-ahead predictable part of the
output is regressed on ``ell`` past outputs, the current and ``ell`` past
inputs, and the ``s - 1`` upcoming inputs.  The fit residuals estimate the
innovation sequence of the steady-state filter; truncation at lag ``ell``
is harmless once the filter transient has contracted below the noise floor.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = ["VarxModel", "build_regressor", "fit_varx"]


def _check_data(u: np.ndarray, y: np.ndarray):
    u = np.atleast_2d(np.asarray(u, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if u.ndim != 2 or y.ndim != 2:
        raise InputError("u and y must be 2-D arrays (samples, channels)")
    return u, y


def build_regressor(u: np.ndarray, y: np.ndarray, ell: int,
                    anticipation: int = 1):
    """Stack regressor columns for every sample with full context.

    Column ``k`` (for ``k`` in ``[ell, k_max]``) contains, in order::

        y_{k-1}, ..., y_{k-ell},
        u_k, u_{k-1}, ..., u_{k-ell},
        u_{k+1}, ..., u_{k+anticipation-1}

    so the regressor dimension is ``ell*p + (ell+1)*m + (anticipation-1)*m``.
    The last usable sample index is ``min(len(y), len(u) - anticipation + 1)
    - 1``.

    Args:
        u: Inputs ``(T_u, m)``.
        y: Outputs ``(T, p)``.
        ell: Number of output/input lags, ``>= 1``.
        anticipation: Nilpotency index ``s`` (1 for a causal system).

    Returns:
        Tuple ``(Phi, Y, k_range)``: regressors ``(n_phi, N)``, targets
        ``(p, N)`` and the sample indices the columns correspond to.
    """
    u, y = _check_data(u, y)
    if ell < 1:
        raise InputError(f"ell must be >= 1, got {ell}")
    if anticipation < 1:
        raise InputError(f"anticipation must be >= 1, got {anticipation}")
    m, p = u.shape[1], y.shape[1]
    s = anticipation
    k_max = min(y.shape[0], u.shape[0] - s + 1) - 1
    if k_max < ell:
        raise InputError(
            f"not enough samples: first usable index {ell}, last {k_max}")
    ks = np.arange(ell, k_max + 1)
    rows = []
    for lag in range(1, ell + 1):
        rows.append(y[ks - lag].T)
    for lag in range(0, ell + 1):
        rows.append(u[ks - lag].T)
    for lead in range(1, s):
        rows.append(u[ks + lead].T)
    Phi = np.vstack(rows)
    assert Phi.shape[0] == ell * p + (ell + 1) * m + (s - 1) * m
    return Phi, y[ks].T, ks


@dataclass(frozen=True)
class VarxModel:
    """Fitted output predictor with lagged and upcoming inputs.

    Attributes:
        theta: Coefficient matrix ``(p, n_phi)`` in the regressor order of
            :func:`build_regressor`.
        ell: Number of lags.
        anticipation: Nilpotency index used for the upcoming-input block.
        m, p: Input and output dimensions.
        ridge: Ridge weight actually applied.
        n_samples: Number of regression samples.
        residual_rms: Root-mean-square of the in-sample residuals.
    """

    theta: np.ndarray
    ell: int
    anticipation: int
    m: int
    p: int
    ridge: float
    n_samples: int
    residual_rms: float

    @property
    def n_phi(self) -> int:
        return self.theta.shape[1]

    def estimate_innovations(self, u: np.ndarray, y: np.ndarray):
        """One-step-ahead residuals on (new or training) data.

        Returns:
            Tuple ``(e, k_range)``: residuals ``(N, p)`` and the sample
            indices they belong to (``k_range[0] == ell``).
        """
        Phi, Y, ks = build_regressor(u, y, self.ell, self.anticipation)
        if Phi.shape[0] != self.n_phi:
            raise InputError(
                f"data has incompatible channel counts for this model "
                f"(regressor {Phi.shape[0]} != {self.n_phi})")
        return (Y - self.theta @ Phi).T, ks

    def predict(self, u: np.ndarray, y: np.ndarray):
        """One-step-ahead predictions aligned like estimate_innovations."""
        Phi, _, ks = build_regressor(u, y, self.ell, self.anticipation)
        return (self.theta @ Phi).T, ks


def fit_varx(u: np.ndarray, y: np.ndarray, ell: int, anticipation: int = 1,
             ridge: float | str = "auto") -> VarxModel:
    """Least-squares fit of the lagged/upcoming-input output predictor.

    Args:
        u: Inputs ``(T_u, m)``.
        y: Outputs ``(T, p)``.
        ell: Number of lags.
        anticipation: Nilpotency index ``s``.
        ridge: Ridge weight on the normal equations; ``"auto"`` picks
            ``1e-8 * trace(Phi Phi') / n_phi`` (scale-invariant), which
            stabilizes near-singular normal equations on noisy records.
            Pass ``0`` on exact data: it solves plain least squares through
            the SVD, keeping the residuals at round-off level, whereas the
            biased fit would fabricate a small innovation sequence out of
            nothing.

    Returns:
        The fitted :class:`VarxModel`.
    """
    Phi, Y, _ = build_regressor(u, y, ell, anticipation)
    n_phi, N = Phi.shape
    if N < n_phi:
        warnings.warn(
            f"regression is underdetermined: {N} samples for {n_phi} "
            "coefficients", stacklevel=2)
    if ridge == "auto":
        lam = 1e-8 * float(np.trace(Phi @ Phi.T)) / n_phi
    else:
        lam = float(ridge)
        if lam < 0.0:
            raise InputError(f"ridge must be nonnegative, got {ridge}")
    if lam > 0.0:
        Gram = Phi @ Phi.T + lam * np.eye(n_phi)
        theta = np.linalg.solve(Gram, Phi @ Y.T).T
    else:
        theta = np.linalg.lstsq(Phi.T, Y.T, rcond=None)[0].T
    resid = Y - theta @ Phi
    rms = float(np.sqrt(np.mean(resid**2)))
    return VarxModel(
        theta=theta, ell=ell, anticipation=anticipation,
        m=u.shape[1] if np.ndim(u) == 2 else 1, p=Y.shape[0],
        ridge=lam, n_samples=N, residual_rms=rms)
