"""Receding-horizon controllers built on recorded data or an exact model.

All controllers share one operating discipline, dictated by the plant's
input anticipation ``s``: producing the measurement ``y_k`` requires inputs
committed through ``u_{k+s-1}``, so the actuation pipeline runs ``s - 1``
steps ahead of the measurement stream.  Each control step therefore

1. ``decide()`` -- plan future inputs with the first ``s - 1`` blocks pinned
   to already-committed values, commit the first free block, and
2. ``observe(y)`` -- ingest the newly produced measurement, update the
   online innovation estimate, and score the pending one-step prediction.

Four controllers implement the same interface:

* :class:`InnovationPredictiveController` -- data-driven; restricts the
  recorded-column combinations to those with zero future innovations and
  conditions on past innovation estimates (certainty equivalence).
* :class:`SubspacePredictiveController` -- data-driven least-squares
  predictor on past inputs/outputs only.
* :class:`RegularizedBehavioralController` -- optimizes over raw data-column
  weights with a quadratic weight penalty instead of an explicit predictor.
* :class:`KalmanPredictiveController` -- exact-model baseline using the
  causal augmented form and its steady-state filter.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .behavioral import block_hankel, is_persistently_exciting
from .errors import InputError, StructuralError
from .innovation import AugmentedModel, KalmanFilter
from .linalg import null_basis
from .qp import solve_box_qp, solve_qp
from .varx import VarxModel, build_regressor

__all__ = [
    "PredictiveControlConfig",
    "InnovationPredictiveController",
    "SubspacePredictiveController",
    "RegularizedBehavioralController",
    "KalmanPredictiveController",
    "ClosedLoopPlant",
    "run_closed_loop",
    "RunResult",
    "prediction_r_squared",
]


@dataclass(frozen=True)
class PredictiveControlConfig:
    """Shared tuning of the receding-horizon controllers.

    Attributes:
        past_depth: Length of the conditioning window (samples).
        future_depth: Prediction/tracking horizon (samples).
        anticipation: Plant nilpotency index ``s``; the planned input window
            has ``future_depth + s - 1`` blocks of which the first ``s - 1``
            are pinned to already-committed inputs.
        w_y: Output tracking weight, ``(p, p)`` positive semidefinite.
        w_u: Input deviation weight, ``(m, m)`` positive definite.
        lambda_g: Column-weight penalty of the regularized behavioral
            controller.
        u_min, u_max: Optional per-channel input bounds.
        warmup: Number of measurements taken under the reference input
            before optimization starts; must cover the conditioning window
            (plus the innovation-estimator lag where applicable).
        pinv_rcond: Relative singular-value cutoff of the data pseudo-
            inverses.
    """

    past_depth: int
    future_depth: int
    anticipation: int
    w_y: np.ndarray
    w_u: np.ndarray
    lambda_g: float = 50.0
    u_min: np.ndarray | None = None
    u_max: np.ndarray | None = None
    warmup: int = 0
    pinv_rcond: float = 1e-10

    def __post_init__(self):
        if self.past_depth < 1 or self.future_depth < 1:
            raise InputError("window depths must be >= 1")
        if self.anticipation < 1:
            raise InputError("anticipation must be >= 1")
        w_y = np.atleast_2d(np.asarray(self.w_y, dtype=float))
        w_u = np.atleast_2d(np.asarray(self.w_u, dtype=float))
        for name, w in (("w_y", w_y), ("w_u", w_u)):
            if w.shape[0] != w.shape[1]:
                raise InputError(f"{name} must be square, got {w.shape}")
            if np.abs(w - w.T).max() > 1e-12 * max(1.0, np.abs(w).max()):
                raise InputError(f"{name} must be symmetric")
        if np.linalg.eigvalsh(w_u).min() <= 0.0:
            raise InputError("w_u must be positive definite")
        if np.linalg.eigvalsh(w_y).min() < -1e-12:
            raise InputError("w_y must be positive semidefinite")
        object.__setattr__(self, "w_y", w_y)
        object.__setattr__(self, "w_u", w_u)
        if self.warmup < self.past_depth:
            raise InputError(
                f"warmup ({self.warmup}) must cover the conditioning window "
                f"({self.past_depth})")
        for name in ("u_min", "u_max"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(
                    self, name, np.atleast_1d(np.asarray(v, dtype=float)))

    @property
    def p(self) -> int:
        return self.w_y.shape[0]

    @property
    def m(self) -> int:
        return self.w_u.shape[0]

    def stacked_weights(self):
        """Block-diagonal weights over the output and input windows."""
        Wy = np.kron(np.eye(self.future_depth), self.w_y)
        Wu = np.kron(
            np.eye(self.future_depth + self.anticipation - 1), self.w_u)
        return Wy, Wu

    def bound_vectors(self, n_blocks: int):
        lo = np.full(n_blocks * self.m, -np.inf)
        hi = np.full(n_blocks * self.m, np.inf)
        if self.u_min is not None:
            lo = np.tile(np.broadcast_to(self.u_min, (self.m,)), n_blocks)
        if self.u_max is not None:
            hi = np.tile(np.broadcast_to(self.u_max, (self.m,)), n_blocks)
        return lo, hi


def _hankel_blocks(u, y, e, past, future, s):
    """Partitioned data matrices with aligned columns.

    Column ``j`` spans ``y[j .. j+past+future-1]`` and
    ``u[j .. j+past+future+s-2]``; the innovation rows (optional) share the
    output span.
    """
    m, p = u.shape[1], y.shape[1]
    span_y = past + future
    span_u = span_y + s - 1
    limits = [u.shape[0] - span_u, y.shape[0] - span_y]
    if e is not None:
        limits.append(e.shape[0] - span_y)
    n_c = min(limits) + 1
    if n_c < 1:
        raise InputError(
            f"recorded data too short for windows {past}+{future} "
            f"(need {span_u} input samples)")
    Hu = block_hankel(u[:n_c + span_u - 1], span_u)
    Hy = block_hankel(y[:n_c + span_y - 1], span_y)
    blocks = {
        "U_p": Hu[:past * m], "U_f": Hu[past * m:],
        "Y_p": Hy[:past * p], "Y_f": Hy[past * p:],
    }
    if e is not None:
        He = block_hankel(e[:n_c + span_y - 1], span_y)
        blocks["E_p"] = He[:past * p]
        blocks["E_f"] = He[past * p:]
    return blocks, n_c


class _PredictiveController:
    """Buffering, warmup, pinning, and diagnostics shared by all variants."""

    name = "base"

    def __init__(self, config: PredictiveControlConfig, reference,
                 initial_inputs):
        self.config = config
        self._reference = reference
        s = config.anticipation
        initial_inputs = np.asarray(initial_inputs, dtype=float).reshape(
            -1, config.m)
        if initial_inputs.shape[0] != s - 1:
            raise InputError(
                f"initial_inputs must provide the {s - 1} pipeline inputs, "
                f"got {initial_inputs.shape[0]}")
        self._u_hist = [row.copy() for row in initial_inputs]
        self._y_hist: list[np.ndarray] = []
        self._e_hist: list[np.ndarray] = []
        self._k = 0
        self._awaiting = False
        self._pending_pred: np.ndarray | None = None
        self._log: dict[str, list] = {
            "k": [], "y_pred": [], "y_real": [], "u_commit": [],
            "qp_iterations": [], "qp_clean": [],
        }

    # -- subclass hooks ------------------------------------------------
    def _estimate_innovation(self, k: int) -> np.ndarray:
        return np.zeros(self.config.p)

    def _solve(self, k: int):
        """Return (u_commit, y_future_prediction, qp_iterations, clean)."""
        raise NotImplementedError

    # -- the two-phase step interface -----------------------------------
    def decide(self) -> np.ndarray:
        """Commit the next input (index ``k + s - 1`` at measurement ``k``)."""
        if self._awaiting:
            raise InputError("observe() must be called between decide() calls")
        k = self._k
        s = self.config.anticipation
        if k < self.config.warmup:
            u_new = np.asarray(self._reference(k + s - 1)[1], dtype=float)
        else:
            u_new, y_f, iters, clean = self._solve(k)
            self._pending_pred = y_f[:self.config.p]
            self._log["k"].append(k)
            self._log["y_pred"].append(self._pending_pred.copy())
            self._log["u_commit"].append(u_new.copy())
            self._log["qp_iterations"].append(iters)
            self._log["qp_clean"].append(clean)
        self._u_hist.append(np.asarray(u_new, dtype=float).reshape(-1))
        self._awaiting = True
        return self._u_hist[-1]

    def observe(self, y_new: np.ndarray):
        """Ingest the measurement produced by the last committed input."""
        if not self._awaiting:
            raise InputError("decide() must be called before observe()")
        y_new = np.asarray(y_new, dtype=float).reshape(-1)
        if y_new.shape[0] != self.config.p:
            raise InputError(
                f"measurement must have {self.config.p} entries")
        self._y_hist.append(y_new)
        self._e_hist.append(self._estimate_innovation(self._k))
        if self._pending_pred is not None:
            self._log["y_real"].append(y_new.copy())
            self._pending_pred = None
        self._k += 1
        self._awaiting = False

    # -- window helpers -------------------------------------------------
    def _windows(self, k: int):
        # List index in _u_hist equals the global input index, so the past
        # input window shares indices with the past output window.
        Lp = self.config.past_depth
        u = np.asarray(self._u_hist[k - Lp:k])
        y = np.asarray(self._y_hist[k - Lp:k])
        e = np.asarray(self._e_hist[k - Lp:k])
        return u, y, e

    def _pinned(self, k: int):
        s = self.config.anticipation
        if s == 1:
            return np.zeros(0)
        return np.concatenate(
            [np.asarray(v) for v in self._u_hist[k:k + s - 1]])

    def _reference_windows(self, k: int):
        cfg = self.config
        r = np.concatenate([
            np.asarray(self._reference(k + i)[0], dtype=float)
            for i in range(cfg.future_depth)])
        u_ref = np.concatenate([
            np.asarray(self._reference(k + i)[1], dtype=float)
            for i in range(cfg.future_depth + cfg.anticipation - 1)])
        return r, u_ref

    def history(self) -> dict[str, np.ndarray]:
        """Per-control-step log plus the full run traces."""
        out = {key: np.asarray(val) for key, val in self._log.items()}
        out["u_all"] = np.asarray(self._u_hist)
        out["y_all"] = np.asarray(self._y_hist)
        out["e_all"] = np.asarray(self._e_hist)
        return out


class _AffinePredictorController(_PredictiveController):
    """Controllers whose prediction is ``y_f = bias(k) + Gamma u_plan``."""

    def _prediction_gamma(self) -> np.ndarray:
        raise NotImplementedError

    def _prediction_bias(self, k: int) -> np.ndarray:
        raise NotImplementedError

    def _prepare_qp(self):
        cfg = self.config
        Gamma = self._prediction_gamma()
        Wy, Wu = cfg.stacked_weights()
        H = 2.0 * (Gamma.T @ Wy @ Gamma + Wu)
        H = 0.5 * (H + H.T)
        pin_dim = (cfg.anticipation - 1) * cfg.m
        self._qp_H_ff = H[pin_dim:, pin_dim:]
        self._qp_H_fp = H[pin_dim:, :pin_dim]
        self._qp_Wy = Wy
        self._qp_Wu = Wu
        self._qp_Gamma = Gamma
        self._qp_pin_dim = pin_dim
        n_blocks = cfg.future_depth + cfg.anticipation - 1
        lo, hi = cfg.bound_vectors(n_blocks)
        self._qp_lo = lo[pin_dim:]
        self._qp_hi = hi[pin_dim:]

    def _solve(self, k: int):
        cfg = self.config
        bias = self._prediction_bias(k)
        r, u_ref = self._reference_windows(k)
        Gamma = self._qp_Gamma
        f = 2.0 * (Gamma.T @ (self._qp_Wy @ (bias - r)) -
                   self._qp_Wu @ u_ref)
        pin = self._pinned(k)
        pd = self._qp_pin_dim
        f_free = f[pd:] + self._qp_H_fp @ pin
        res = solve_box_qp(self._qp_H_ff, f_free, self._qp_lo, self._qp_hi)
        if res.status != "optimal":  # pragma: no cover - box is consistent
            raise StructuralError("input bounds are inconsistent")
        u_plan = np.concatenate([pin, res.z])
        y_f = bias + Gamma @ u_plan
        u_commit = res.z[:cfg.m]
        return u_commit, y_f, res.iterations, True


class InnovationPredictiveController(_AffinePredictorController):
    """Data-driven predictor conditioned on estimated innovations.

    Columns harvested from recorded inputs, outputs, and innovation
    estimates are restricted to combinations whose future-innovation rows
    vanish; on that subspace the future outputs are a linear function of
    the past window (including past innovations) and the planned inputs.
    Online, past innovations are estimated with the same regression model
    that produced the recorded innovation sequence.
    """

    name = "innovation"

    def __init__(self, data_u, data_y, varx: VarxModel,
                 config: PredictiveControlConfig, reference,
                 initial_inputs, excitation_order: int | None = None):
        super().__init__(config, reference, initial_inputs)
        if config.warmup < varx.ell + config.past_depth:
            raise InputError(
                f"warmup must cover the estimator lag plus the window "
                f"({varx.ell} + {config.past_depth})")
        self._varx = varx
        data_u = np.atleast_2d(np.asarray(data_u, dtype=float))
        data_y = np.atleast_2d(np.asarray(data_y, dtype=float))
        e, ks = varx.estimate_innovations(data_u, data_y)
        u_al, y_al = data_u[ks[0]:], data_y[ks[0]:]
        blocks, n_c = _hankel_blocks(
            u_al, y_al, e, config.past_depth, config.future_depth,
            config.anticipation)
        if excitation_order is not None:
            rep = is_persistently_exciting(data_u, excitation_order)
            if not rep.satisfied:
                warnings.warn(
                    f"recorded input is not persistently exciting at order "
                    f"{excitation_order} (rank {rep.rank}/{rep.required_rank})",
                    stacklevel=2)
        E_f = blocks["E_f"]
        # The innovation rows need an external scale: on exact data the
        # residuals are pure round-off, and a relative rank test would read
        # that round-off as structure.  Measured against the output rows,
        # negligible innovations mean no restriction at all and the
        # predictor degrades gracefully to the plain pseudo-inverse form.
        if np.linalg.norm(E_f) <= 1e-9 * max(np.linalg.norm(blocks["Y_f"]), 1.0):
            Ef_perp = np.eye(E_f.shape[1])
        else:
            Ef_perp = null_basis(E_f)
        if Ef_perp.shape[1] == 0:
            raise StructuralError(
                "future-innovation rows leave no freedom in the data; "
                "more data columns are needed")
        Pi_full = np.vstack(
            [blocks["U_p"], blocks["Y_p"], blocks["E_p"], blocks["U_f"]])
        Pi = Pi_full @ Ef_perp
        full_map = (blocks["Y_f"] @ Ef_perp) @ np.linalg.pinv(
            Pi, rcond=config.pinv_rcond)
        past_cols = config.past_depth * (config.m + 2 * config.p)
        self._past_map = full_map[:, :past_cols]
        self._gamma = full_map[:, past_cols:]
        self._n_columns = n_c
        self._prepare_qp()

    def _estimate_innovation(self, k: int) -> np.ndarray:
        ell, s = self._varx.ell, self.config.anticipation
        if k < ell:
            return np.zeros(self.config.p)
        # One-column regression on the run history; the slice ends at the
        # input committed by the decide() that produced y_k.
        u = np.asarray(self._u_hist[k - ell:k + s])
        y = np.asarray(self._y_hist[k - ell:k + 1])
        Phi, Y, _ = build_regressor(u, y, ell, s)
        return (Y[:, -1] - self._varx.theta @ Phi[:, -1])

    def _prediction_gamma(self) -> np.ndarray:
        return self._gamma

    def _prediction_bias(self, k: int) -> np.ndarray:
        u, y, e = self._windows(k)
        w = np.concatenate([u.ravel(), y.ravel(), e.ravel()])
        return self._past_map @ w


class SubspacePredictiveController(_AffinePredictorController):
    """Least-squares data-driven predictor on raw past inputs/outputs."""

    name = "subspace"

    def __init__(self, data_u, data_y, config: PredictiveControlConfig,
                 reference, initial_inputs):
        super().__init__(config, reference, initial_inputs)
        data_u = np.atleast_2d(np.asarray(data_u, dtype=float))
        data_y = np.atleast_2d(np.asarray(data_y, dtype=float))
        blocks, n_c = _hankel_blocks(
            data_u, data_y, None, config.past_depth, config.future_depth,
            config.anticipation)
        Pi = np.vstack([blocks["U_p"], blocks["Y_p"], blocks["U_f"]])
        full_map = blocks["Y_f"] @ np.linalg.pinv(
            Pi, rcond=config.pinv_rcond)
        past_cols = config.past_depth * (config.m + config.p)
        self._past_map = full_map[:, :past_cols]
        self._gamma = full_map[:, past_cols:]
        self._n_columns = n_c
        self._prepare_qp()

    def _prediction_gamma(self) -> np.ndarray:
        return self._gamma

    def _prediction_bias(self, k: int) -> np.ndarray:
        u, y, _ = self._windows(k)
        return self._past_map @ np.concatenate([u.ravel(), y.ravel()])


class KalmanPredictiveController(_AffinePredictorController):
    """Exact-model baseline: augmented-form filter plus model predictions."""

    name = "oracle"

    def __init__(self, model: AugmentedModel, kf: KalmanFilter,
                 config: PredictiveControlConfig, reference,
                 initial_inputs, xi0: np.ndarray | None = None):
        super().__init__(config, reference, initial_inputs)
        if config.anticipation != model.s:
            raise InputError(
                f"config anticipation {config.anticipation} does not match "
                f"the model index {model.s}")
        self._model = model
        self._kf = kf
        self._xi = (np.zeros(model.n_xi) if xi0 is None
                    else np.asarray(xi0, dtype=float).copy())
        Lf, s = config.future_depth, config.anticipation
        m, p = config.m, config.p
        A, B, C = model.A, model.B, model.C
        # Observability rows C A^i and the input-to-output map over the
        # horizon (state propagation plus the anticipating feedthrough).
        powers = [np.eye(model.n_xi)]
        for _ in range(Lf - 1):
            powers.append(A @ powers[-1])
        self._obs = np.vstack([C @ Pi for Pi in powers])
        Gamma = np.zeros((Lf * p, (Lf + s - 1) * m))
        wf = model.wf
        Ni = np.eye(wf.n_f)
        fast_maps = []
        for i in range(s):
            fast_maps.append(wf.C_f @ Ni @ wf.B_f)
            Ni = Ni @ wf.N
        for i in range(Lf):
            for l in range(i):
                Gamma[i * p:(i + 1) * p, l * m:(l + 1) * m] += (
                    C @ powers[i - 1 - l] @ B)
            Gamma[i * p:(i + 1) * p, i * m:(i + 1) * m] += model.D
            for j in range(s):
                Gamma[i * p:(i + 1) * p,
                      (i + j) * m:(i + j + 1) * m] -= fast_maps[j]
        self._gamma_model = Gamma
        self._prepare_qp()

    def _estimate_innovation(self, k: int) -> np.ndarray:
        model, s = self._model, self.config.anticipation
        # Deterministic compensation from the committed inputs u_k..u_{k+s-1}.
        u_now = np.asarray(self._u_hist[k:k + s])
        d = model.D @ u_now[0]
        wf = model.wf
        Ni = np.eye(wf.n_f)
        for j in range(s):
            d -= wf.C_f @ Ni @ wf.B_f @ u_now[j]
            Ni = Ni @ wf.N
        e = self._y_hist[k] - d - model.C @ self._xi
        self._xi = (model.A @ self._xi + model.B @ u_now[0] +
                    self._kf.K @ e)
        return e

    def _prediction_gamma(self) -> np.ndarray:
        return self._gamma_model

    def _prediction_bias(self, k: int) -> np.ndarray:
        return self._obs @ self._xi


class RegularizedBehavioralController(_PredictiveController):
    """Column-weight optimization with a quadratic weight penalty.

    Instead of forming an explicit predictor, every step optimizes a weight
    vector over the recorded data columns subject to matching the past
    window and the pinned inputs exactly; ``lambda_g`` shrinks the weights
    to suppress noise amplification.
    """

    name = "regularized"

    def __init__(self, data_u, data_y, config: PredictiveControlConfig,
                 reference, initial_inputs):
        super().__init__(config, reference, initial_inputs)
        data_u = np.atleast_2d(np.asarray(data_u, dtype=float))
        data_y = np.atleast_2d(np.asarray(data_y, dtype=float))
        blocks, n_c = _hankel_blocks(
            data_u, data_y, None, config.past_depth, config.future_depth,
            config.anticipation)
        s, m = config.anticipation, config.m
        pin_rows = (s - 1) * m
        U_f, Y_f = blocks["U_f"], blocks["Y_f"]
        rows_eq = np.vstack([blocks["U_p"], blocks["Y_p"], U_f[:pin_rows]])
        self._rows_eq = rows_eq
        self._eq_pinv = np.linalg.pinv(rows_eq, rcond=config.pinv_rcond)
        # Rank deficiency here is routine (exact data obeys linear
        # recurrences); what matters online is the per-step match residual,
        # recorded in the log as "eq_residual".
        self._log["eq_residual"] = []
        Z = null_basis(rows_eq)
        if Z.shape[1] == 0:
            raise StructuralError(
                "no freedom left after matching the past window; "
                "more data columns are needed")
        Wy, Wu = config.stacked_weights()
        M = (Y_f.T @ Wy @ Y_f + U_f.T @ Wu @ U_f +
             config.lambda_g * np.eye(n_c))
        H = 2.0 * (Z.T @ M @ Z)
        self._qp_H = 0.5 * (H + H.T)
        self._Z = Z
        self._M = M
        self._U_f, self._Y_f = U_f, Y_f
        self._UfZ = U_f @ Z
        self._YfZ = Y_f @ Z
        self._Wy, self._Wu = Wy, Wu
        self._pin_rows = pin_rows
        self._n_columns = n_c
        n_blocks = config.future_depth + s - 1
        lo, hi = config.bound_vectors(n_blocks)
        self._lo_free = lo[pin_rows:]
        self._hi_free = hi[pin_rows:]

    def _solve(self, k: int):
        cfg = self.config
        u_win, y_win, _ = self._windows(k)
        pin = self._pinned(k)
        rhs = np.concatenate([u_win.ravel(), y_win.ravel(), pin])
        g0 = self._eq_pinv @ rhs
        self._log["eq_residual"].append(
            np.linalg.norm(self._rows_eq @ g0 - rhs) /
            max(np.linalg.norm(rhs), 1.0))
        r, u_ref = self._reference_windows(k)
        lin = (self._Y_f.T @ (self._Wy @ r) +
               self._U_f.T @ (self._Wu @ u_ref))
        f = 2.0 * (self._Z.T @ (self._M @ g0 - lin))

        Uf_g0 = self._U_f @ g0
        rows = []
        rhs_ineq = []
        free = slice(self._pin_rows, None)
        if np.isfinite(self._hi_free).any():
            keep = np.isfinite(self._hi_free)
            rows.append(self._UfZ[free][keep])
            rhs_ineq.append(self._hi_free[keep] - Uf_g0[free][keep])
        if np.isfinite(self._lo_free).any():
            keep = np.isfinite(self._lo_free)
            rows.append(-self._UfZ[free][keep])
            rhs_ineq.append(-(self._lo_free[keep] - Uf_g0[free][keep]))
        if rows:
            res = solve_qp(self._qp_H, f, A=np.vstack(rows),
                           b=np.concatenate(rhs_ineq))
        else:
            res = solve_qp(self._qp_H, f)
        clean = res.status == "optimal"
        if not clean:
            # Inconsistent bounds after the equality match: fall back to the
            # unconstrained weights and clip the committed input.
            res = solve_qp(self._qp_H, f)
        g = g0 + self._Z @ res.z
        u_plan = self._U_f @ g
        y_f = self._Y_f @ g
        u_commit = u_plan[self._pin_rows:self._pin_rows + cfg.m]
        if not clean:
            lo, hi = cfg.bound_vectors(1)
            u_commit = np.clip(u_commit, lo, hi)
        return u_commit, y_f, res.iterations, clean


class ClosedLoopPlant:
    """Step-wise simulator of the causal augmented form of the true plant.

    The plant produces ``y_k`` once inputs through ``u_{k+s-1}`` are
    committed, mirroring the controllers' pipeline discipline.
    """

    def __init__(self, model: AugmentedModel, eps: np.ndarray,
                 v: np.ndarray, x0_slow: np.ndarray | None = None,
                 initial_inputs=None):
        self._model = model
        self._eps = np.atleast_2d(np.asarray(eps, dtype=float))
        self._v = np.atleast_2d(np.asarray(v, dtype=float))
        s = model.s
        n_s = model.wf.n_s
        xi = np.zeros(model.n_xi)
        if x0_slow is not None:
            xi[:n_s] = np.asarray(x0_slow, dtype=float)
        if model.r_w:
            xi[n_s:] = self._eps[:s + 1].ravel()
        self._xi = xi
        if initial_inputs is None:
            initial_inputs = np.zeros((s - 1, model.m))
        self._u = [np.asarray(row, dtype=float).copy()
                   for row in np.atleast_2d(initial_inputs)] if s > 1 else []
        if len(self._u) != s - 1:
            raise InputError(f"initial_inputs must have {s - 1} rows")
        self._k = 0
        wf = model.wf
        maps = []
        Ni = np.eye(wf.n_f)
        for _ in range(s):
            maps.append(wf.C_f @ Ni @ wf.B_f)
            Ni = Ni @ wf.N
        self._fast_maps = maps

    @property
    def inputs(self) -> np.ndarray:
        return np.asarray(self._u)

    def commit(self, u_new: np.ndarray) -> np.ndarray:
        """Append the next input and return the measurement it completes."""
        model = self._model
        s = model.s
        self._u.append(np.asarray(u_new, dtype=float).reshape(model.m))
        k = self._k
        if len(self._u) != k + s:
            raise InputError("commit() called out of order")
        d = model.D @ self._u[k]
        for j in range(s):
            d = d - self._fast_maps[j] @ self._u[k + j]
        y = model.C @ self._xi + d + self._v[k]
        seed = (self._eps[k + s + 1] if model.r_w else
                np.zeros(0))
        self._xi = model.A @ self._xi + model.B @ self._u[k] + model.G @ seed
        self._k += 1
        return y


@dataclass(frozen=True)
class RunResult:
    """Closed-loop run record for one controller.

    Attributes:
        name: Controller name.
        u: Committed inputs ``(n_steps + s - 1, m)`` (pipeline included).
        y: Measurements ``(n_steps, p)``.
        history: Per-control-step log from the controller (see
            ``_PredictiveController.history``).
        warmup: Number of warmup measurements at the head of ``y``.
    """

    name: str
    u: np.ndarray
    y: np.ndarray
    history: dict = field(repr=False)
    warmup: int = 0


def run_closed_loop(model: AugmentedModel, controller, n_steps: int,
                    eps: np.ndarray, v: np.ndarray,
                    x0_slow: np.ndarray | None = None,
                    initial_inputs=None) -> RunResult:
    """Drive a controller against the causal plant for ``n_steps`` steps."""
    plant = ClosedLoopPlant(model, eps, v, x0_slow=x0_slow,
                            initial_inputs=initial_inputs)
    for _ in range(n_steps):
        u_new = controller.decide()
        y = plant.commit(u_new)
        controller.observe(y)
    hist = controller.history()
    return RunResult(
        name=controller.name, u=plant.inputs, y=hist["y_all"],
        history=hist, warmup=controller.config.warmup)


def prediction_r_squared(y: np.ndarray, y_pred: np.ndarray,
                         segments=None) -> float:
    """Coefficient of determination of one-step predictions.

    The total sum of squares is pooled about per-segment means, so constant
    reference offsets that change between segments (e.g. setpoint phases) do
    not inflate the score.

    Args:
        y: Realized outputs ``(N, p)``.
        y_pred: Matching predictions ``(N, p)``.
        segments: Optional iterable of index arrays/slices partitioning the
            samples; defaults to one segment.

    Returns:
        ``1 - SSE / SST`` (can be negative; ``-inf`` when SST is zero and
        SSE is not).
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    y_pred = np.atleast_2d(np.asarray(y_pred, dtype=float))
    if y.shape != y_pred.shape:
        raise InputError(f"shape mismatch {y.shape} vs {y_pred.shape}")
    sse = float(((y - y_pred) ** 2).sum())
    if segments is None:
        segments = [slice(None)]
    sst = 0.0
    for seg in segments:
        block = y[seg]
        if block.shape[0] == 0:
            continue
        sst += float(((block - block.mean(axis=0)) ** 2).sum())
    if sst == 0.0:
        return 1.0 if sse == 0.0 else -np.inf
    return 1.0 - sse / sst
