"""Tests for the causal augmented form and its steady-state filter."""

import numpy as np
import pytest

from innodeepc.descriptor import (
    DescriptorSystem,
    sample_noise,
    simulate,
    weierstrass_decompose,
)
from innodeepc.errors import InputError
from innodeepc.innovation import (
    build_augmented,
    deterministic_compensation,
    kalman_innovations,
    simulate_augmented,
    solve_steady_kalman,
)

from oracles import random_structured_descriptor, scalar_riccati_prediction


def _noisy_structured_system(seed, n_max=6, q_scale=0.05, r_scale=0.1,
                             require_anticipation=False):
    rng = np.random.default_rng(seed)
    while True:
        E, A, B, C, D, info = random_structured_descriptor(
            rng, n_max=n_max, m=2, p=2)
        if not require_anticipation or info["s"] >= 2:
            break
    n = E.shape[0]
    p = C.shape[0]
    sys = DescriptorSystem(
        E=E, A=A, B=B, C=C, D=D,
        Q_noise=q_scale**2 * np.eye(n), R_noise=r_scale**2 * np.eye(p))
    return sys, info


class TestBuildAugmented:
    def test_dimensions_and_layout(self):
        sys, info = _noisy_structured_system(0, require_anticipation=True)
        wf = weierstrass_decompose(sys)
        model = build_augmented(wf, D=sys.D, R=sys.R_noise)
        s, n_s = wf.s, wf.n_s
        assert model.r_w == sys.n  # full-rank Q
        assert model.n_xi == n_s + (s + 1) * model.r_w
        # Slow block and seed consumption.
        assert np.array_equal(model.A[:n_s, :n_s], wf.J)
        L = model.noise_factor
        assert np.allclose(model.A[:n_s, n_s:n_s + model.r_w], L[:n_s])
        # Seed register shifts and the fresh seed lands at the bottom.
        r = model.r_w
        assert np.array_equal(
            model.A[n_s:n_s + s * r, n_s + r:], np.eye(s * r))
        assert np.array_equal(model.G[n_s + s * r:], np.eye(r))
        assert not model.G[:n_s + s * r].any()
        # Output blocks: C_s then -C_f N^i L_f.
        assert np.allclose(model.C[:, :n_s], wf.C_s)
        Ni = np.eye(wf.n_f)
        for i in range(s):
            blk = model.C[:, n_s + i * r:n_s + (i + 1) * r]
            assert np.allclose(blk, -wf.C_f @ Ni @ L[n_s:])
            Ni = Ni @ wf.N
        assert not model.C[:, n_s + s * r:].any()

    def test_from_system_directly(self):
        sys, _ = _noisy_structured_system(1)
        model = build_augmented(sys)
        assert model.m == sys.m and model.p == sys.p

    def test_bare_form_requires_d_and_r(self):
        sys, _ = _noisy_structured_system(2)
        wf = weierstrass_decompose(sys)
        with pytest.raises(InputError):
            build_augmented(wf)


class TestEquivalence:
    @pytest.mark.parametrize("seed", [0, 3, 7, 12])
    def test_matches_descriptor_simulation(self, seed):
        # The augmented recursion must reproduce the anticipating descriptor
        # simulation sample for sample, for the same noise seeds.
        sys, info = _noisy_structured_system(seed)
        wf = weierstrass_decompose(sys)
        model = build_augmented(wf, D=sys.D, R=sys.R_noise)
        rng = np.random.default_rng(seed + 100)
        K = 40
        u = rng.standard_normal((K + wf.s - 1, sys.m))
        noise = sample_noise(sys, wf, K, seed=seed)
        x0 = rng.standard_normal(wf.n_s) if wf.n_s else None
        traj = simulate(sys, wf, u, noise=noise, x0_slow=x0)
        y2 = simulate_augmented(model, u, noise.eps, noise.v, x0_slow=x0)
        scale = max(1.0, np.abs(traj.y).max())
        assert np.allclose(traj.y, y2, atol=1e-10 * scale)

    def test_compensation_is_noise_free_fast_output(self):
        # For a purely fast system the whole response is deterministic
        # feedthrough, so the compensation equals the noise-free output.
        N = np.array([[0.0, 1.0], [0.0, 0.0]])
        sys = DescriptorSystem(
            E=N, A=np.eye(2), B=np.array([[0.2], [1.0]]),
            C=np.array([[1.0, -0.5]]), D=np.array([[0.3]]))
        wf = weierstrass_decompose(sys)
        model = build_augmented(wf, D=sys.D, R=np.eye(1))
        rng = np.random.default_rng(5)
        u = rng.standard_normal((20, 1))
        traj = simulate(sys, wf, u)
        d = deterministic_compensation(model, u)
        assert np.allclose(d, traj.y, atol=1e-12)

    def test_causal_compensation_is_plain_feedthrough(self):
        sys, _ = _noisy_structured_system(4)
        wf = weierstrass_decompose(sys)
        if wf.s != 1:
            pytest.skip("structured draw happened to anticipate")
        model = build_augmented(wf, D=sys.D, R=sys.R_noise)
        u = np.random.default_rng(0).standard_normal((10, sys.m))
        assert np.allclose(deterministic_compensation(model, u), u @ sys.D.T)


class TestSteadyKalman:
    def test_matches_scalar_riccati(self):
        # Scalar plant via its 3-state augmented form: the innovation
        # variance must equal c^2 p + r with p the scalar Riccati root.
        a, c, q, r = 0.9, 1.3, 0.5, 0.2
        sys = DescriptorSystem(
            E=np.eye(1), A=np.array([[a]]), B=np.eye(1),
            C=np.array([[c]]), D=np.zeros((1, 1)),
            Q_noise=np.array([[q]]), R_noise=np.array([[r]]))
        model = build_augmented(sys)
        kf = solve_steady_kalman(model)
        p_star = scalar_riccati_prediction(a, c, q, r)
        assert kf.S.shape == (1, 1)
        assert abs(kf.S[0, 0] - (c * c * p_star + r)) < 1e-9

    def test_riccati_residual_is_zero(self):
        sys, _ = _noisy_structured_system(6, require_anticipation=True)
        model = build_augmented(sys)
        kf = solve_steady_kalman(model)
        A, C, G = model.A, model.C, model.G
        P = kf.P
        S = C @ P @ C.T + model.R
        resid = A @ P @ A.T - A @ P @ C.T @ np.linalg.solve(
            S, C @ P @ A.T) + G @ G.T - P
        assert np.abs(resid).max() < 1e-9 * max(1.0, np.abs(P).max())

    def test_singular_measurement_noise_rejected(self):
        sys, _ = _noisy_structured_system(7)
        wf = weierstrass_decompose(sys)
        model = build_augmented(wf, D=sys.D, R=np.zeros((sys.p, sys.p)))
        with pytest.raises(InputError):
            solve_steady_kalman(model)


class TestInnovations:
    def test_whiteness_and_covariance(self):
        sys, _ = _noisy_structured_system(8, require_anticipation=True)
        wf = weierstrass_decompose(sys)
        model = build_augmented(wf, D=sys.D, R=sys.R_noise)
        kf = solve_steady_kalman(model)
        K = 6000
        rng = np.random.default_rng(42)
        u = rng.standard_normal((K + wf.s - 1, sys.m))
        noise = sample_noise(sys, wf, K, seed=9)
        traj = simulate(sys, wf, u, noise=noise)
        e = kalman_innovations(model, kf, u, traj.y)
        e = e[200:]  # discard the filter transient
        # Covariance close to the predicted innovation covariance.
        S_hat = e.T @ e / len(e)
        assert np.abs(S_hat - kf.S).max() < 0.15 * np.abs(kf.S).max()
        # Sample autocorrelation at small lags is near zero.
        e0 = e - e.mean(axis=0)
        denom = np.sqrt((e0 * e0).sum(axis=0))
        for lag in (1, 2, 3):
            rho = (e0[:-lag] * e0[lag:]).sum(axis=0) / (
                denom[:len(denom)] ** 2)
            assert np.abs(rho).max() < 0.07

    def test_innovations_vanish_without_noise(self):
        # On noise-free data the filter reconstructs the output exactly
        # once its state has converged.
        sys, _ = _noisy_structured_system(10, require_anticipation=True)
        wf = weierstrass_decompose(sys)
        model = build_augmented(wf, D=sys.D, R=1e-8 * np.eye(sys.p))
        kf = solve_steady_kalman(model)
        rng = np.random.default_rng(3)
        K = 300
        u = rng.standard_normal((K + wf.s - 1, sys.m))
        traj = simulate(sys, wf, u)
        e = kalman_innovations(model, kf, u, traj.y)
        assert np.abs(e[50:]).max() < 1e-6 * max(1.0, np.abs(traj.y).max())

    def test_length_validation(self):
        sys, _ = _noisy_structured_system(11)
        model = build_augmented(sys)
        kf = solve_steady_kalman(model)
        y = np.zeros((10, sys.p))
        u = np.zeros((10 + model.s - 2, sys.m))  # one sample short
        with pytest.raises(InputError):
            kalman_innovations(model, kf, u, y)
