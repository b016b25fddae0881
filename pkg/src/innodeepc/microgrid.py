"""Four-bus DC microgrid benchmark and the closed-loop comparison experiment.

The plant is a descriptor model of a small DC network: two bus capacitances,
three line inductances, a resistive load, a current-controlled source at one
bus, and a Kirchhoff current-law node that has no storage of its own.  The
singular rows (KCL node, current-source relation) make the model a genuine
descriptor system whose output depends on future inputs after sampling.

This module builds the continuous model, discretizes it, generates exciting
offline data at a verified signal-to-noise ratio, runs the verification
battery (regularity, decomposition structure, data-driven reachability,
excitation), and drives the receding-horizon controllers against the same
noise realization for a setpoint-switching experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .behavioral import (
    PencilRankReport,
    combined_excitation_check,
    is_persistently_exciting,
    r_controllability_test,
)
from .control import (
    InnovationPredictiveController,
    KalmanPredictiveController,
    PredictiveControlConfig,
    RegularizedBehavioralController,
    RunResult,
    SubspacePredictiveController,
    prediction_r_squared,
    run_closed_loop,
)
from .descriptor import (
    DescriptorSystem,
    check_regularity,
    constant_input_equilibrium,
    discretize_foh,
    sample_noise,
    simulate,
    weierstrass_decompose,
)
from .errors import InputError, PreconditionError
from .innovation import build_augmented, solve_steady_kalman
from .linalg import psd_factor
from .varx import fit_varx

__all__ = [
    "MicrogridParams",
    "ExperimentConfig",
    "CollectedData",
    "VerificationRecord",
    "ControllerRun",
    "ExperimentReport",
    "build_microgrid",
    "collect_data",
    "run_experiment",
    "r_squared",
    "settling_steps",
]

#: State ordering of the microgrid model.
STATE_NAMES = ("V1", "V2", "V3", "V4", "i12", "i23", "i24")
OUTPUT_NAMES = ("V1", "V3", "V4")
INPUT_NAMES = ("u1", "u2")


@dataclass(frozen=True)
class MicrogridParams:
    """Physical parameters of the four-bus DC network.

    Capacitances in farad, inductances in henry, resistances in ohm, and the
    sampling period in seconds.  All values must be strictly positive.
    """

    c1: float = 2.2e-3
    c4: float = 1.5e-3
    l12: float = 0.5e-3
    l23: float = 0.8e-3
    l24: float = 0.6e-3
    r12: float = 0.10
    r23: float = 0.15
    r24: float = 0.12
    r_load: float = 60.0
    h: float = 0.1

    def __post_init__(self):
        for name in ("c1", "c4", "l12", "l23", "l24",
                     "r12", "r23", "r24", "r_load", "h"):
            if not getattr(self, name) > 0.0:
                raise InputError(f"{name} must be strictly positive")


def build_microgrid(params: MicrogridParams | None = None, *,
                    w_std: float = 0.0, v_std: float = 0.0,
                    algebraic_leak: float = 0.05,
                    orientation: str = "v2_minus_v3") -> DescriptorSystem:
    """Assemble the continuous-time descriptor model of the DC network.

    States are ``[V1, V2, V3, V4, i12, i23, i24]``; inputs are the Bus-1
    current injection ``u1`` and the Bus-3 source current ``u2``; outputs are
    the bus voltages ``[V1, V3, V4]``.  Equations::

        C1 dV1 = u1 - i12
        0     = i12 - i23 - i24        (KCL at Bus 2)
        0     = i23 - u2               (current-source relation)
        C4 dV4 = i24 - V4 / R_load
        L12 di12 = V1 - V2 - R12 i12
        L23 di23 = V2 - V3 - R23 i23   (or V3 - V2 ... with the alternate
                                        line orientation)
        L24 di24 = V2 - V4 - R24 i24

    Args:
        params: Physical parameters (defaults used when omitted).
        w_std: Process-noise standard deviation per equation row, expressed
            in row-normalized units (each dynamic row divided by its storage
            coefficient), so the disturbance is ~``w_std`` volts or amps per
            step regardless of how small the capacitances and inductances
            are.  Interpreted as a discrete-time covariance after sampling.
        v_std: Measurement-noise standard deviation per output channel.
        orientation: ``"v2_minus_v3"`` orients the Bus2-Bus3 line current
            with the KCL sign at Bus 2 (so ``V3`` sits ``R23 i23 + L23 di23``
            *below* ``V2``); ``"v3_minus_v2"`` flips the line voltage drop.

    Returns:
        The continuous-time :class:`DescriptorSystem` with noise covariances
        ``w_std^2 I_7`` and ``v_std^2 I_3`` attached.
    """
    pr = MicrogridParams() if params is None else params
    if orientation not in ("v2_minus_v3", "v3_minus_v2"):
        raise InputError(f"unknown orientation {orientation!r}")
    E = np.diag([pr.c1, 0.0, 0.0, pr.c4, pr.l12, pr.l23, pr.l24])
    A = np.zeros((7, 7))
    B = np.zeros((7, 2))
    A[0, 4] = -1.0
    B[0, 0] = 1.0
    A[1, 4], A[1, 5], A[1, 6] = 1.0, -1.0, -1.0
    A[2, 5] = 1.0
    B[2, 1] = -1.0
    A[3, 6], A[3, 3] = 1.0, -1.0 / pr.r_load
    A[4, 0], A[4, 1], A[4, 4] = 1.0, -1.0, -pr.r12
    sign = 1.0 if orientation == "v2_minus_v3" else -1.0
    A[5, 1], A[5, 2], A[5, 5] = sign, -sign, -pr.r23
    A[6, 1], A[6, 3], A[6, 6] = 1.0, -1.0, -pr.r24
    C = np.zeros((3, 7))
    C[0, 0] = C[1, 2] = C[2, 3] = 1.0
    D = np.zeros((3, 2))
    # Storage rows carry w_std in state-rate units (volt/s on capacitor
    # rows, A/s on inductor rows); the algebraic rows (KCL, converter
    # current command) carry a small constraint-violation leakage.  The
    # leakage current is integrated by the bus capacitors into correlated
    # voltage drift that dominates the sensor noise; rejecting that drift is
    # what separates a noise-model-aware controller from one that treats
    # recorded data as exact trajectories.  algebraic_leak sets the leakage
    # std as a fraction of w_std.
    row_scale = np.where(np.diag(E) > 0.0, np.diag(E), algebraic_leak)
    return DescriptorSystem(
        E=E, A=A, B=B, C=C, D=D,
        Q_noise=np.diag((w_std * row_scale) ** 2),
        R_noise=v_std ** 2 * np.eye(3))


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings of the setpoint-switching benchmark experiment.

    All fields are flat scalars or small tuples so the config round-trips
    through a key=value file.  ``weight_y`` and ``weight_u`` scale identity
    weight matrices of the output and input dimension.
    """

    t_data: int = 300
    noise_w_std: float = 0.03
    noise_v_std: float = 0.6
    algebraic_leak: float = 0.05
    ell: int = 15
    past_depth: int = 12
    future_depth: int = 20
    weight_y: float = 1.0
    weight_u: float = 0.05
    lambda_g: float = 50.0
    u_set_1: tuple = (5.0, 2.5)
    u_set_2: tuple = (4.0, 1.8)
    switch_step: int = 82
    run_steps: int = 150
    warmup: int = -1              # -1: use ell + past_depth
    prbs_amplitude: float = 0.5
    prbs_hold: int = 2
    sine_amplitude: float = 0.25
    sine_freq_hz: float = 0.3
    dither_std: float = 0.12
    warmup_dither_std: float = 0.12
    snr_target_db: float = 33.0
    snr_tol_db: float = 3.0
    pe_retries: int = 5
    reach_depth: int = 12
    include_oracle: bool = False
    orientation: str = "v2_minus_v3"
    seeds: tuple = tuple(range(10))

    def __post_init__(self):
        for name in ("t_data", "ell", "past_depth", "future_depth",
                     "run_steps", "prbs_hold", "reach_depth"):
            if not getattr(self, name) >= 1:
                raise InputError(f"{name} must be a positive integer")
        if not 0 < self.switch_step < self.run_steps:
            raise InputError(
                f"switch_step must lie inside the run, got {self.switch_step}"
                f" of {self.run_steps}")
        for name in ("noise_w_std", "noise_v_std", "algebraic_leak", "prbs_amplitude",
                     "sine_amplitude", "dither_std", "warmup_dither_std"):
            if getattr(self, name) < 0.0:
                raise InputError(f"{name} must be nonnegative")
        if len(self.u_set_1) != 2 or len(self.u_set_2) != 2:
            raise InputError("setpoints must have two entries")

    @property
    def effective_warmup(self) -> int:
        if self.warmup >= 0:
            return self.warmup
        return self.ell + self.past_depth

    @property
    def window_depth(self) -> int:
        return self.past_depth + self.future_depth

    def control_config(self, anticipation: int) -> PredictiveControlConfig:
        """The controller-facing view of these settings.

        The pseudo-inverse cutoff is kept at 1e-6: noisy records are full
        rank far above it, while noise-free records carry genuinely tiny
        singular directions that a sharper cutoff would invert into a
        useless predictor.
        """
        return PredictiveControlConfig(
            past_depth=self.past_depth, future_depth=self.future_depth,
            anticipation=anticipation, w_y=self.weight_y * np.eye(3),
            w_u=self.weight_u * np.eye(2), lambda_g=self.lambda_g,
            warmup=self.effective_warmup, pinv_rcond=1e-6)


@dataclass(frozen=True)
class CollectedData:
    """An offline excitation record with its noise-free replay.

    ``u`` and ``y`` are the dataset proper (equal length); ``y_clean`` is
    the output the same input would have produced without noise, used for
    signal-to-noise accounting and noise-free verification.
    """

    u: np.ndarray
    y: np.ndarray
    y_clean: np.ndarray
    snr_db: float
    seed: int
    attempts: int


def _excitation_input(cfg: ExperimentConfig, rng: np.random.Generator,
                      length: int, h: float) -> np.ndarray:
    """Setpoint-centered exciting input: PRBS + sinusoid + Gaussian dither."""
    u = np.tile(np.asarray(cfg.u_set_1, dtype=float), (length, 1))
    n_flips = -(-length // cfg.prbs_hold)
    for ch in range(2):
        levels = rng.choice([-1.0, 1.0], size=n_flips)
        prbs = np.repeat(levels, cfg.prbs_hold)[:length]
        u[:, ch] += cfg.prbs_amplitude * prbs
    t = np.arange(length) * h
    phase = [0.0, 0.5 * np.pi]
    for ch in range(2):
        u[:, ch] += cfg.sine_amplitude * np.sin(
            2.0 * np.pi * cfg.sine_freq_hz * t + phase[ch])
    u += cfg.dither_std * rng.standard_normal((length, 2))
    return u


def _measure_snr(y_clean: np.ndarray, v_std: float) -> float:
    """Excitation signal power relative to the sensor noise floor, in dB.

    The process-noise response is treated as part of the plant's stochastic
    motion rather than as sensor corruption, so the reference noise level is
    the measurement-noise variance alone.
    """
    if v_std <= 0.0:
        return math.inf
    signal = float(((y_clean - y_clean.mean(axis=0)) ** 2).mean())
    return 10.0 * math.log10(signal / v_std ** 2)


def collect_data(sys_d: DescriptorSystem, wf, cfg: ExperimentConfig,
                 seed: int, x0_slow: np.ndarray | None = None,
                 pe_order: int | None = None, h: float = 0.1) -> CollectedData:
    """Record an offline dataset with verified excitation.

    Simulates ``t_data`` steps of the discretized plant under the exciting
    input (drawing ``anticipation - 1`` extra input samples internally for
    the fast-subsystem look-ahead) and re-simulates the same input without
    noise for the signal-to-noise measurement.  If the recorded input fails
    the persistency-of-excitation test the draw is retried with a derived
    seed, up to ``cfg.pe_retries`` times.

    Args:
        sys_d: Discrete-time plant.
        wf: Its quasi-Weierstrass form.
        cfg: Experiment settings.
        seed: Base seed; retries use seeds derived from it.
        x0_slow: Initial slow state (defaults to zero; pass the operating
            point for data "around" it).
        pe_order: Excitation order to verify; defaults to the window depth
            plus the causal-model state dimension.
        h: Sampling period, used only to phase the excitation sinusoid.

    Returns:
        A :class:`CollectedData` record of length ``t_data``.

    Raises:
        PreconditionError: If excitation still fails after all retries.
    """
    s = wf.s
    if pe_order is None:
        pe_order = cfg.window_depth + wf.n_s + (s + 1) * wf.r_w
    last_rank = None
    for attempt in range(max(1, cfg.pe_retries)):
        trial_seed = seed + 7919 * attempt
        rng = np.random.default_rng((trial_seed, 1))
        u_sim = _excitation_input(cfg, rng, cfg.t_data + s - 1, h)
        noise = sample_noise(sys_d, wf, cfg.t_data, trial_seed)
        traj = simulate(sys_d, wf, u_sim, noise=noise, x0_slow=x0_slow,
                        with_state=False)
        clean = simulate(sys_d, wf, u_sim, noise=None, x0_slow=x0_slow,
                         with_state=False)
        rep = is_persistently_exciting(traj.u, pe_order)
        last_rank = rep
        if rep.satisfied:
            return CollectedData(
                u=traj.u, y=traj.y, y_clean=clean.y,
                snr_db=_measure_snr(clean.y, cfg.noise_v_std),
                seed=trial_seed, attempts=attempt + 1)
    raise PreconditionError(
        f"excitation of order {pe_order} not reached after "
        f"{cfg.pe_retries} attempts (last rank "
        f"{last_rank.rank}/{last_rank.required_rank})")


@dataclass(frozen=True)
class VerificationRecord:
    """Outcome of the offline condition battery.

    ``structure`` holds the computed decomposition sizes
    ``(slow_dim, fast_dim, anticipation)``; ``reachability`` is the
    data-driven pencil certificate on the noise-free replay; the combined
    input/innovation excitation is reported but treated as advisory because
    its rank requirement usually exceeds what a finite record can supply.
    """

    regular: bool
    structure: tuple
    n_xi: int
    orientation: str
    reachability: PencilRankReport
    pe_input_ok: bool
    pe_input_rank: tuple
    pe_combined_ok: bool
    pe_combined_rank: tuple
    snr_db: float

    @property
    def passed(self) -> bool:
        """Hard conditions only; the combined excitation stays advisory."""
        return bool(self.regular and self.reachability.verdict
                    and self.pe_input_ok)


@dataclass(frozen=True)
class ControllerRun:
    """Closed-loop record and summary metrics for one controller."""

    name: str
    u: np.ndarray            # applied inputs, one row per input index
    y: np.ndarray            # measurements, one row per step
    y_pred: np.ndarray       # one-step predictions over the control region
    e_hat: np.ndarray        # online innovation estimates per step
    references: np.ndarray   # output reference per step
    metrics: dict = field(repr=False, default_factory=dict)


@dataclass(frozen=True)
class ExperimentReport:
    """Everything one seeded experiment produced."""

    seed: int
    config: ExperimentConfig
    verification: VerificationRecord
    runs: tuple
    warmup: int
    switch_global: int
    h: float
    y_ref_1: np.ndarray
    y_ref_2: np.ndarray

    def run(self, name: str) -> ControllerRun:
        for r in self.runs:
            if r.name == name:
                return r
        raise KeyError(name)


def r_squared(pred: np.ndarray, actual: np.ndarray) -> float:
    """Coefficient of determination, pooled across output channels.

    ``1 - SSE/SST`` with the total sum of squares taken about the mean of
    ``actual``.  Returns ``nan`` when ``actual`` has zero variance (the
    statistic is undefined there).
    """
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    actual = np.atleast_2d(np.asarray(actual, dtype=float))
    if pred.shape != actual.shape:
        raise InputError(f"shape mismatch {pred.shape} vs {actual.shape}")
    if actual.shape[0] < 2:
        raise InputError("need at least two samples")
    sse = float(((actual - pred) ** 2).sum())
    sst = float(((actual - actual.mean(axis=0)) ** 2).sum())
    if sst == 0.0:
        return math.nan
    return 1.0 - sse / sst


def settling_steps(y: np.ndarray, reference: np.ndarray, switch: int,
                   band: float = 0.02, hold: int = 10) -> int | None:
    """Steps after ``switch`` until all channels stay in the reference band.

    A channel is settled at step ``k`` when ``|y_k - r| <= band * |r|``; the
    settling time is the first ``k >= switch`` starting ``hold`` consecutive
    settled steps, reported relative to ``switch``.  ``None`` when the run
    never settles (or ends before the hold window completes).
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    reference = np.asarray(reference, dtype=float).reshape(-1)
    tol = band * np.abs(reference)
    ok = np.all(np.abs(y[switch:] - reference) <= tol, axis=1)
    run = 0
    for i, good in enumerate(ok):
        run = run + 1 if good else 0
        if run >= hold:
            return i - hold + 1
    return None


def _run_metrics(run: RunResult, cfg: ExperimentConfig,
                 refs: np.ndarray, switch_ctrl: int) -> dict:
    """Summary metrics over the control region of one closed-loop run."""
    warmup = run.warmup
    y = run.y[warmup:]
    r = refs[warmup:]
    y_pred = run.history["y_pred"]
    y_real = run.history["y_real"]
    err = y - r
    pre, post = err[:switch_ctrl], err[switch_ctrl:]
    steady = min(30, len(pre), len(post))
    segments = [np.arange(switch_ctrl),
                np.arange(switch_ctrl, len(y_real))]
    settle = settling_steps(y, r[-1], switch_ctrl)
    return {
        "r2": r_squared(y_pred, y_real),
        "r2_within_phase": prediction_r_squared(y_real, y_pred, segments),
        "rms_phase1": float(np.sqrt((pre ** 2).mean())),
        "rms_phase2": float(np.sqrt((post ** 2).mean())),
        "rms_steady_phase1": float(np.sqrt((pre[-steady:] ** 2).mean())),
        "rms_steady_phase2": float(np.sqrt((post[-steady:] ** 2).mean())),
        "settling_steps": math.nan if settle is None else float(settle),
        "qp_clean_fraction": float(np.mean(run.history["qp_clean"])),
    }


def run_experiment(cfg: ExperimentConfig | None = None, seed: int = 0,
                   params: MicrogridParams | None = None) -> ExperimentReport:
    """Run the full offline-then-online benchmark for one seed.

    Offline: build and discretize the plant, collect exciting data from the
    phase-1 operating point, fit the lagged regression, estimate the
    innovation sequence, and run the verification battery (pencil
    reachability on the noise-free replay of the same input).  Online: run
    the innovation-aware, regularized-behavioral, and subspace controllers
    (plus the model-based oracle when configured) against bitwise-identical
    noise, holding the phase-1 setpoint until ``switch_step`` control steps
    have elapsed and the phase-2 setpoint afterwards.

    A verification failure does not abort the run; it is recorded on the
    report (``report.verification.passed``).
    """
    cfg = ExperimentConfig() if cfg is None else cfg
    pr = MicrogridParams() if params is None else params

    sys_c = build_microgrid(pr, w_std=cfg.noise_w_std,
                            v_std=cfg.noise_v_std,
                            algebraic_leak=cfg.algebraic_leak,
                            orientation=cfg.orientation)
    sys_d = discretize_foh(sys_c, pr.h)
    regularity = check_regularity(sys_d.E, sys_d.A)
    wf = weierstrass_decompose(sys_d)
    s = wf.s
    if cfg.future_depth < s:
        raise InputError(
            f"future_depth must cover the anticipation window ({s})")
    if 0 <= cfg.warmup < cfg.ell + cfg.past_depth:
        raise InputError(
            f"warmup must cover ell + past_depth = "
            f"{cfg.ell + cfg.past_depth}")

    u1 = np.asarray(cfg.u_set_1, dtype=float)
    u2 = np.asarray(cfg.u_set_2, dtype=float)
    x_eq1, y_ref1 = constant_input_equilibrium(sys_c, u1)
    x_eq2, y_ref2 = constant_input_equilibrium(sys_c, u2)
    x0_slow = np.linalg.solve(wf.T, x_eq1)[:wf.n_s]

    data = collect_data(sys_d, wf, cfg, seed, x0_slow=x0_slow, h=pr.h)
    # On an exact record the ridge fabricates a small innovation sequence
    # out of its own bias, which the innovation-aware controller would then
    # treat as a real noise channel; noise-free configurations fit plain
    # least squares instead.
    ridge = 0.0 if cfg.noise_w_std == 0.0 and cfg.noise_v_std == 0.0 else "auto"
    varx = fit_varx(data.u, data.y, cfg.ell, anticipation=s, ridge=ridge)
    e_hat, ks = varx.estimate_innovations(data.u, data.y)

    n_xi = wf.n_s + (s + 1) * wf.r_w
    pe_order = cfg.window_depth + n_xi
    pe_in = is_persistently_exciting(data.u, pe_order)
    u_aligned = data.u[ks[0]:ks[0] + e_hat.shape[0]]
    pe_comb = combined_excitation_check(u_aligned, e_hat, pe_order)
    reach = r_controllability_test(
        data.u, data.y_clean, cfg.reach_depth, wf.n_s, s)
    verification = VerificationRecord(
        regular=bool(regularity.regular),
        structure=(wf.n_s, wf.n_f, s), n_xi=n_xi,
        orientation=cfg.orientation, reachability=reach,
        pe_input_ok=bool(pe_in.satisfied),
        pe_input_rank=(pe_in.rank, pe_in.required_rank),
        pe_combined_ok=bool(pe_comb.satisfied),
        pe_combined_rank=(pe_comb.rank, pe_comb.required_rank),
        snr_db=data.snr_db)

    warmup = cfg.effective_warmup
    n_steps = warmup + cfg.run_steps
    switch_global = warmup + cfg.switch_step

    rng = np.random.default_rng((seed, 2))
    model = build_augmented(sys_d)
    eps = rng.standard_normal((n_steps + s + 1, model.r_w))
    Lr, _ = psd_factor(sys_d.R_noise)
    v = rng.standard_normal((n_steps, Lr.shape[1])) @ Lr.T
    dither = cfg.warmup_dither_std * rng.standard_normal((warmup + s, 2))

    def reference(k: int):
        if k < switch_global:
            u_ref = u1 + dither[k] if k < warmup else u1
            return y_ref1, u_ref
        return y_ref2, u2

    refs = np.asarray([reference(k)[0] for k in range(n_steps)])
    ctrl_cfg = cfg.control_config(s)
    initial_inputs = np.tile(u1, (s - 1, 1))

    def _controllers():
        yield InnovationPredictiveController(
            data.u, data.y, varx, ctrl_cfg, reference, initial_inputs)
        yield RegularizedBehavioralController(
            data.u, data.y, ctrl_cfg, reference, initial_inputs)
        yield SubspacePredictiveController(
            data.u, data.y, ctrl_cfg, reference, initial_inputs)
        if cfg.include_oracle:
            kf = solve_steady_kalman(model)
            xi0 = np.zeros(model.n_xi)
            xi0[:wf.n_s] = x0_slow
            yield KalmanPredictiveController(
                model, kf, ctrl_cfg, reference, initial_inputs, xi0=xi0)

    runs = []
    for ctrl in _controllers():
        res = run_closed_loop(model, ctrl, n_steps, eps, v,
                              x0_slow=x0_slow, initial_inputs=initial_inputs)
        metrics = _run_metrics(res, cfg, refs, cfg.switch_step)
        runs.append(ControllerRun(
            name=res.name, u=res.u, y=res.y,
            y_pred=res.history["y_pred"], e_hat=res.history["e_all"],
            references=refs, metrics=metrics))

    return ExperimentReport(
        seed=seed, config=cfg, verification=verification, runs=tuple(runs),
        warmup=warmup, switch_global=switch_global, h=pr.h,
        y_ref_1=y_ref1, y_ref_2=y_ref2)
