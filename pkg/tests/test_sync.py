"""Tests for the nudged dynamics, exponential weight and stopping machinery."""

import numpy as np
import pytest

from kdvb.rng import stream
from kdvb.spectral import EigenBasis, Field, TorusGrid
from kdvb.dynamics import SolverConfig
from kdvb.forcing import MultiplicativeNoiseSpec, SdeStepper
from kdvb.sync import (
    NudgingConfig,
    SyncReport,
    estimate_C0,
    gamma_supermartingale_check,
    girsanov_shift,
    run_nudged_stopped,
    run_sync,
    step_nudged,
    stopping_tau,
    suggested_K,
)

GRID = TorusGrid(64)


def noise_spec(mode="bounded", beta0=0.05, **kw):
    basis = EigenBasis(GRID, 16)
    return MultiplicativeNoiseSpec(basis, mode, beta0=beta0, M=kw.pop("M", 8), **kw)


def u_init(scale=1.0):
    return Field.from_function(GRID, lambda x: scale * (np.sin(x) + 0.3 * np.cos(2 * x)))


def v_init(scale=1.0):
    return Field.from_function(GRID, lambda x: scale * (0.5 * np.cos(x) - 0.2 * np.sin(3 * x)))


H = Field.from_function(GRID, lambda x: 0.1 * np.cos(x))


class TestNudgingConfig:
    def test_default_gain(self):
        cfg = NudgingConfig(N=4)
        assert cfg.lambda_N == 5.0
        assert cfg.lam == 2.5

    def test_guards(self):
        with pytest.raises(ValueError):
            NudgingConfig(N=0)
        with pytest.raises(ValueError):
            NudgingConfig(N=2, lam=-1.0)


class TestStepNudged:
    def test_equal_states_no_feedback(self):
        """u = v: the feedback vanishes, so the step equals the plain SDE step."""
        spec = noise_spec()
        u = u_init()
        dW = 0.01 * np.arange(16.0)
        cfg = NudgingConfig(N=4)
        nudged = step_nudged(u.copy(), u, cfg, spec, H, 1e-3, stream(0), dW=dW)
        scfg = SolverConfig(1e-3, 64, scheme="exp_euler")
        plain = SdeStepper(scfg, spec, H).step(u.coeffs, 0.0, stream(0), dW=dW)
        assert np.array_equal(nudged.coeffs, plain)

    def test_zero_gain_plain_step(self):
        spec = noise_spec()
        u, v = u_init(), v_init()
        dW = 0.01 * np.arange(16.0)
        cfg = NudgingConfig(N=4, lam=0.0)
        nudged = step_nudged(v.copy(), u, cfg, spec, H, 1e-3, stream(1), dW=dW)
        scfg = SolverConfig(1e-3, 64, scheme="exp_euler")
        plain = SdeStepper(scfg, spec, H).step(v.coeffs, 0.0, stream(1), dW=dW)
        assert np.array_equal(nudged.coeffs, plain)


class TestDeterministicSync:
    def test_contraction_loglinear(self):
        """g = 0, N large: log E||w||^2 is linear in t with negative slope."""
        cfg = NudgingConfig(N=8)
        rep = run_sync(u_init(), v_init(), cfg, None, H, T=5.0, dt=5e-3)
        fit = rep.fit
        assert fit["rate"] > 0
        assert fit["r2"] > 0.99

    def test_identical_initial_data(self):
        cfg = NudgingConfig(N=4)
        rep = run_sync(u_init(), u_init(), cfg, None, H, T=0.5, dt=5e-3)
        assert np.max(rep.mean_sq_error) < 1e-20

    def test_monotone_gain(self):
        """Larger N (with lam = lambda_N/2) never slows the fitted decay."""
        rates = []
        for N in (2, 4, 8):
            rep = run_sync(u_init(), v_init(), NudgingConfig(N=N), None, H,
                           T=4.0, dt=5e-3)
            rates.append(rep.fit["rate"])
        assert rates[0] <= rates[1] + 1e-9 <= rates[2] + 2e-9

    def test_decay_rate_lower_bound(self):
        """Fitted decay beats lambda_N/2 minus the measured C0 drag."""
        cfg = NudgingConfig(N=10)
        rep = run_sync(u_init(0.3), v_init(0.3), cfg, None, H, T=3.0, dt=2e-3)
        drag = rep.C0 * np.max(np.diff(rep.u_h1_int, axis=0)
                               / np.diff(rep.times)[:, None])
        assert rep.fit["rate"] >= cfg.lambda_N / 2.0 - drag - 0.5


class TestGammaCheck:
    def test_zero_initial_error(self):
        cfg = NudgingConfig(N=4)
        rep = run_sync(u_init(), u_init(), cfg, None, H, T=0.5, dt=5e-3)
        chk = gamma_supermartingale_check(rep)
        assert np.all(rep.mean_sq_error < 1e-20)

    def test_single_path_deterministic_supermartingale(self):
        """With g = 0, e^{Gamma} ||w||^2 is non-increasing along the path."""
        cfg = NudgingConfig(N=8)
        rep = run_sync(u_init(), v_init(), cfg, None, H, T=3.0, dt=2e-3)
        ly = rep.lyapunov[:, 0]
        valid = rep.w_sq[:, 0] > 1e-20
        diffs = np.diff(ly[valid])
        assert np.all(diffs <= 1e-6 * max(1.0, ly[0]))

    def test_ensemble_no_violation(self):
        cfg = NudgingConfig(N=8)
        rep = run_sync(u_init(), v_init(), cfg, noise_spec(), H,
                       T=3.0, dt=5e-3, n_paths=128, seed=2)
        chk = gamma_supermartingale_check(rep)
        assert not np.any(chk["violations"])

    def test_gamma_starts_at_zero(self):
        cfg = NudgingConfig(N=4)
        rep = run_sync(u_init(), v_init(), cfg, None, H, T=0.2, dt=5e-3)
        assert np.all(rep.gamma[0] == 0.0)


class TestStoppingTau:
    def test_zero_u_never_hits(self):
        """u = 0: the expression decreases, so tau = inf for positive R, beta."""
        zero = Field.zero(GRID)
        cfg = NudgingConfig(N=8)    # lambda_N/4 = 4.25 > L_g^2 = 0
        rep = run_sync(zero, v_init(0.1), cfg, None, None, T=1.0, dt=5e-3)
        tau = stopping_tau(rep, R=1.0, beta=0.5)
        assert np.all(np.isinf(tau))

    def test_immediate_hit_at_zero_thresholds(self):
        cfg = NudgingConfig(N=1, C0_estimate=1.0)   # lambda_1/4 = 0.25 small
        rep = run_sync(u_init(3.0), v_init(), cfg, None, H, T=1.0, dt=5e-3)
        tau = stopping_tau(rep, R=0.0, beta=0.0)
        assert np.all(np.isfinite(tau))

    def test_hit_probability_decreasing_in_R(self):
        cfg = NudgingConfig(N=2, C0_estimate=1.0)
        rep = run_sync(u_init(2.0), v_init(), cfg, noise_spec(beta0=0.2), H,
                       T=2.0, dt=5e-3, n_paths=64, seed=3)
        fracs = [np.mean(np.isfinite(stopping_tau(rep, R, beta=0.1)))
                 for R in (0.0, 2.0, 8.0, 32.0)]
        assert all(a >= b for a, b in zip(fracs, fracs[1:]))

    def test_negative_R_rejected(self):
        cfg = NudgingConfig(N=2)
        rep = run_sync(u_init(), v_init(), cfg, None, H, T=0.1, dt=5e-3)
        with pytest.raises(ValueError):
            stopping_tau(rep, R=-1.0, beta=0.1)


class TestGirsanovShift:
    def test_zero_for_equal_states(self):
        spec = noise_spec()
        vec, norm = girsanov_shift(u_init(), u_init(), NudgingConfig(N=4), spec)
        assert norm == 0.0

    def test_operator_bound(self):
        """||h|| <= lam * sup||f|| * ||P_N(u - v)|| pointwise."""
        spec = noise_spec()
        cfg = NudgingConfig(N=4)
        sup_f = 1.0 / (np.min(spec.beta[:spec.M]) * spec.shape(0.0))
        rng = np.random.default_rng(5)
        basis = spec.basis
        for _ in range(50):
            u = Field(GRID, basis.field_from_vector(rng.standard_normal(12)))
            v = Field(GRID, basis.field_from_vector(rng.standard_normal(12)))
            _, norm = girsanov_shift(u, v, cfg, spec)
            pn = (u - v).project_PN(cfg.N).sobolev_norm(0)
            assert norm <= cfg.lam * sup_f * pn + 1e-12

    def test_rank_guard(self):
        spec = noise_spec(M=2)
        with pytest.raises(ValueError):
            girsanov_shift(u_init(), v_init(), NudgingConfig(N=4), spec)

    def test_accumulated_shift_finite(self):
        """int ||h||^2 along a synchronizing pair converges (tail < 1e-6 of total)."""
        spec = noise_spec(beta0=0.05)
        cfg = NudgingConfig(N=8)
        rep = run_nudged_stopped(u_init(), v_init(), cfg, spec, K=1e12,
                                 T=10.0, dt=5e-3, h=H, n_paths=4, seed=6)
        total = rep.shift_sq_integral
        # compare against the integral accumulated over the first 80% of time
        rep_short = run_nudged_stopped(u_init(), v_init(), cfg, spec, K=1e12,
                                       T=8.0, dt=5e-3, h=H, n_paths=4, seed=6)
        tail = total - rep_short.shift_sq_integral
        assert np.all(tail <= 1e-6 * np.maximum(total, 1e-30))


class TestNudgedStopped:
    def test_huge_K_matches_run_sync(self):
        spec = noise_spec()
        cfg = NudgingConfig(N=8)
        rep_a = run_nudged_stopped(u_init(), v_init(), cfg, spec, K=1e12,
                                   T=1.0, dt=5e-3, h=H, n_paths=4, seed=7)
        rep_b = run_sync(u_init(), v_init(), cfg, spec, H, T=1.0, dt=5e-3,
                         n_paths=4, seed=7)
        assert np.all(np.isinf(rep_a.sigma_K))
        assert np.allclose(rep_a.w_sq, rep_b.w_sq, rtol=1e-10, atol=1e-14)

    def test_zero_K_free_evolution(self):
        spec = noise_spec()
        cfg = NudgingConfig(N=8)
        rep = run_nudged_stopped(u_init(), v_init(), cfg, spec, K=0.0,
                                 T=2.0, dt=5e-3, h=H, n_paths=4, seed=8)
        assert np.all(rep.sigma_K == 0.0)
        # with the shift off, no synchronization to machine precision
        assert np.min(rep.w_sq[-1]) > 1e-10

    def test_sync_fraction_majority(self):
        """With the tail-sum budget for K, at least half the paths synchronize."""
        spec = noise_spec(beta0=0.05)
        cfg = NudgingConfig(N=8)
        K = suggested_K(R_star=50.0, m_star=1)
        rep = run_nudged_stopped(u_init(), v_init(), cfg, spec, K=K,
                                 T=10.0, dt=5e-3, h=H, n_paths=32, seed=9)
        assert rep.sync_fraction >= 0.5


class TestC0Estimate:
    def test_zero_for_equal_states(self):
        c = u_init().coeffs[None, :]
        assert estimate_C0(GRID, c, c) == 0.0

    def test_nonnegative(self):
        rng = np.random.default_rng(10)
        basis = EigenBasis(GRID, 16)
        cu = basis.field_from_vector(rng.standard_normal((20, 12)))
        cv = basis.field_from_vector(rng.standard_normal((20, 12)))
        assert estimate_C0(GRID, cu, cv) >= 0.0

    def test_inequality_holds_with_estimate(self):
        """The reported C0 makes the pathwise inequality true on fresh states."""
        from kdvb.dynamics import nonlinearity_coeffs
        from kdvb.spectral import l2_inner_coeffs, sobolev_norm_coeffs
        rng = np.random.default_rng(11)
        basis = EigenBasis(GRID, 16)
        cu = basis.field_from_vector(rng.standard_normal((50, 12)))
        cv = basis.field_from_vector(rng.standard_normal((50, 12)))
        C0 = estimate_C0(GRID, cu, cv)
        k = GRID.wavenumbers
        w = cu - cv
        lhs = np.abs(l2_inner_coeffs(
            nonlinearity_coeffs(cu, GRID) - nonlinearity_coeffs(cv, GRID), w))
        rhs = (0.5 * C0 * sobolev_norm_coeffs(cu, k, 1.0) ** 2
               * sobolev_norm_coeffs(w, k, 0.0) ** 2
               + 0.5 * sobolev_norm_coeffs(w, k, 1.0) ** 2)
        assert np.all(lhs <= rhs * (1 + 1e-10) + 1e-12)
