"""Tests for the kick-noise and multiplicative-noise generators."""

import numpy as np
import pytest

from kdvb.rng import raised_cosine_cdf, stream
from kdvb.spectral import EigenBasis, Field, TorusGrid, TWO_PI
from kdvb.dynamics import SolverConfig, solve_S
from kdvb.forcing import (
    KickSample,
    LocalisedNoiseSpec,
    MultiplicativeNoiseSpec,
    QBasis,
    SdeStepper,
    bump,
    eval_eta,
    f_apply,
    g_apply,
    sample_kick,
    stochastic_step,
)

GRID = TorusGrid(64)


def kick_spec(**kw):
    args = dict(x1=1.0, x2=4.0, t1=0.2, t2=0.8, period=1.0, n_modes=16)
    args.update(kw)
    return LocalisedNoiseSpec(**args)


def gauss2d(f, x1, x2, t1, t2, n=64):
    """Tensor Gauss-Legendre quadrature of f(x, t) over the rectangle."""
    gx, wx = np.polynomial.legendre.leggauss(n)
    xs = 0.5 * (x2 - x1) * gx + 0.5 * (x1 + x2)
    ts = 0.5 * (t2 - t1) * gx + 0.5 * (t1 + t2)
    vals = f(xs[:, None], ts[None, :])
    return 0.25 * (x2 - x1) * (t2 - t1) * np.einsum("i,j,ij->", wx, wx, vals)


class TestBump:
    def test_support_and_peak(self):
        s = np.linspace(-0.5, 1.5, 201)
        v = bump(s)
        assert np.all(v[(s <= 0) | (s >= 1)] == 0)
        assert v[s == 0.5] == pytest.approx(1.0)

    def test_c2_at_edges(self):
        # second finite difference stays small approaching the edge
        h = 1e-4
        d2 = (bump(2 * h) - 2 * bump(h) + bump(0.0)) / h**2
        assert abs(d2) < 1e-1


class TestQBasis:
    def test_alphas_nondecreasing(self):
        qb = kick_spec().qbasis
        assert np.all(np.diff(qb.alphas) >= 0)

    def test_orthonormal(self):
        qb = kick_spec(n_modes=6).qbasis
        for i in range(6):
            for j in range(i, 6):
                ip = gauss2d(lambda x, t: qb.phi(i, x, t) * qb.phi(j, x, t),
                             qb.x1, qb.x2, qb.t1, qb.t2)
                assert ip == pytest.approx(1.0 if i == j else 0.0, abs=1e-8)

    def test_alpha_closed_form(self):
        qb = kick_spec().qbasis
        a0, m, n = qb.pairs[0]
        assert (m, n) == (1, 1)
        assert a0 == pytest.approx(1 + (np.pi / qb.Lx) ** 2 + (np.pi / qb.Lt) ** 2)


class TestSpecValidation:
    def test_rectangle_must_be_interior(self):
        with pytest.raises(ValueError):
            kick_spec(x1=0.0)
        with pytest.raises(ValueError):
            kick_spec(t2=1.5)

    def test_amplitude_cap(self):
        spec = kick_spec()
        with pytest.raises(ValueError):
            kick_spec(b=2.0 * spec.qbasis.alphas ** -2.0)

    def test_default_amplitudes(self):
        spec = kick_spec()
        assert np.allclose(spec.b, spec.qbasis.alphas ** -2.0)


class TestSampleKick:
    def test_zero_amplitudes_zero_kick(self):
        spec = kick_spec(b=np.zeros(16))
        kick = sample_kick(spec, stream(0))
        assert kick.field(0.5, GRID).sobolev_norm(0) == 0.0

    def test_xi_mean_symmetric(self):
        spec = kick_spec()
        xs = np.concatenate([sample_kick(spec, stream(1, kick=k)).xi
                             for k in range(6250)])   # 1e5 draws
        # Var xi = 1/3 - 2/pi^2 for the raised cosine
        sd = np.sqrt((1 / 3 - 2 / np.pi**2) / xs.size)
        assert abs(xs.mean()) < 3 * sd

    def test_xi_ks_distance(self):
        spec = kick_spec()
        xs = np.sort(np.concatenate([sample_kick(spec, stream(2, kick=k)).xi
                                     for k in range(6250)]))
        ecdf = np.arange(1, xs.size + 1) / xs.size
        ks = np.max(np.abs(ecdf - raised_cosine_cdf(xs)))
        assert ks < 0.01

    def test_kick_independence(self):
        """xi vectors from distinct kick indices are uncorrelated."""
        spec = kick_spec()
        a = np.array([sample_kick(spec, stream(3, kick=k)).xi for k in range(2000)])
        corr = np.mean(a[:-1] * a[1:]) / (1 / 3 - 2 / np.pi**2)
        assert abs(corr) < 3 / np.sqrt(a[:-1].size)

    def test_coefficient_bounds(self):
        with pytest.raises(ValueError):
            KickSample(kick_spec(), 1.5 * np.ones(16))


class TestEvalEta:
    def test_zero_outside_window(self):
        spec = kick_spec()
        samples = [sample_kick(spec, stream(4, kick=k)) for k in range(3)]
        for t in (0.0, 0.1, 0.9, 1.05, 2.95):
            assert eval_eta(samples, 1.0, t, GRID).sobolev_norm(0) == 0.0

    def test_reproduces_local_kick(self):
        spec = kick_spec()
        samples = [sample_kick(spec, stream(5, kick=k)) for k in range(3)]
        tau = 0.5
        f1 = eval_eta(samples, 1.0, 2.0 + tau, GRID)
        f2 = samples[2].field(tau, GRID)
        assert (f1 - f2).sobolev_norm(0) == 0.0

    def test_past_last_kick_zero(self):
        spec = kick_spec()
        samples = [sample_kick(spec, stream(6))]
        assert eval_eta(samples, 1.0, 1.5, GRID).sobolev_norm(0) == 0.0

    def test_support_in_x(self):
        spec = kick_spec()
        kick = sample_kick(spec, stream(7))
        vals = kick.field(0.5, GRID).values
        outside = (GRID.nodes < spec.x1) | (GRID.nodes > spec.x2)
        # spectral interpolation is global; pointwise support holds on nodes
        assert np.max(np.abs(kick.eta_xt(GRID.nodes[outside], 0.5))) == 0.0
        assert np.max(np.abs(vals[outside])) < 1e-10

    def test_l2_norm_vs_quadrature(self):
        """Space-time L^2 norm of one kick: grid+time quadrature vs dense 2-D."""
        spec = kick_spec(b_scale=50.0)
        kick = sample_kick(spec, stream(8))
        fine = TorusGrid(512)
        direct = gauss2d(lambda x, t: kick.eta_xt(x, t) ** 2,
                         spec.x1, spec.x2, spec.t1, spec.t2, n=96)
        gt, wt = np.polynomial.legendre.leggauss(64)
        ts = 0.5 * (spec.t2 - spec.t1) * gt + 0.5 * (spec.t1 + spec.t2)
        norms2 = np.array([kick.field(t, fine).sobolev_norm(0) ** 2 for t in ts])
        via_grid = 0.5 * (spec.t2 - spec.t1) * np.dot(wt, norms2)
        assert abs(direct - via_grid) <= 1e-6


def mult_spec(mode="bounded", **kw):
    basis = EigenBasis(GRID, 16)
    args = dict(basis=basis, mode=mode, beta0=1.0, M=4)
    args.update(kw)
    return MultiplicativeNoiseSpec(**args)


def random_u(rng, scale=1.0):
    w = scale * rng.standard_normal(9)
    basis = EigenBasis(GRID, 16)
    return Field(GRID, basis.field_from_vector(w))


class TestMultiplicativeSpec:
    def test_mode_guard(self):
        with pytest.raises(ValueError):
            mult_spec("quadratic")

    def test_hilbert_schmidt(self):
        spec = mult_spec()
        j = np.arange(1, 17)
        assert spec.hs_base == pytest.approx(np.sqrt(np.sum(j**-4.0)))

    def test_bounded_hs_independent_of_u(self):
        spec = mult_spec("bounded")
        rng = np.random.default_rng(0)
        for _ in range(10):
            u = random_u(rng, scale=rng.uniform(0, 20))
            assert spec.hs_norm(u.sobolev_norm(0)) == pytest.approx(spec.constants["K1"])

    def test_linear_growth_bound(self):
        spec = mult_spec("linear", L=0.3)
        K3, L3 = spec.constants["K3"], spec.constants["L3"]
        rng = np.random.default_rng(1)
        for _ in range(100):
            r = random_u(rng, scale=rng.uniform(0, 10)).sobolev_norm(0)
            assert spec.hs_norm(r) <= K3 + L3 * r + 1e-12

    def test_sublinear_growth_bound(self):
        spec = mult_spec("sublinear", rho=0.4)
        c = spec.constants
        rng = np.random.default_rng(2)
        for r in rng.uniform(0, 50, size=1000):
            assert spec.hs_norm(r) <= c["K2"] + c["L2"] * r ** 0.4 + 1e-12

    def test_lipschitz_g1(self):
        rng = np.random.default_rng(3)
        for mode, kw in (("bounded", {}), ("sublinear", {"rho": 0.5}),
                         ("linear", {"L": 0.4})):
            spec = mult_spec(mode, **kw)
            Lg = spec.constants["L_g"]
            for _ in range(200):
                r1, r2 = rng.uniform(0, 10, 2)
                lhs = abs(spec.hs_norm(r1) - spec.hs_norm(r2))
                assert lhs <= Lg * abs(r1 - r2) + 1e-12

    def test_linear_flags(self):
        assert mult_spec("linear", L=0.3).constants["strictly_contractive"]
        c = mult_spec("linear", L=0.8).constants
        assert c["contractive"] and not c["strictly_contractive"]
        assert not mult_spec("linear", L=1.5).constants["contractive"]


class TestGF:
    def test_g_zero_vector(self):
        spec = mult_spec()
        u = random_u(np.random.default_rng(4))
        assert g_apply(spec, u, np.zeros(16)).sobolev_norm(0) == 0.0

    def test_g_hs_identity(self):
        """sum_j ||g(u) e_j||^2 equals the closed-form HS norm squared."""
        spec = mult_spec("linear", L=0.5)
        u = random_u(np.random.default_rng(5), scale=2.0)
        total = sum(g_apply(spec, u, np.eye(16)[j]).sobolev_norm(0) ** 2
                    for j in range(16))
        assert np.sqrt(total) == pytest.approx(spec.hs_norm(u.sobolev_norm(0)))

    def test_composition_identity(self):
        """g(u) f(u) v = P_M v to 1e-12, all modes."""
        rng = np.random.default_rng(6)
        for mode, kw in (("bounded", {}), ("sublinear", {}), ("linear", {})):
            spec = mult_spec(mode, **kw)
            u = random_u(rng, scale=3.0)
            v = random_u(rng, scale=1.0)
            lhs = g_apply(spec, u, f_apply(spec, u, v))
            rhs = v.project_PN(spec.M)
            assert (lhs - rhs).sobolev_norm(0) < 1e-12

    def test_f_kills_high_modes(self):
        spec = mult_spec(M=4)
        basis = spec.basis
        v = Field(GRID, basis.field_from_vector(np.r_[np.zeros(4), np.ones(5)]))
        u = random_u(np.random.default_rng(7))
        assert np.all(f_apply(spec, u, v) == 0.0)

    def test_f_norm_closed_form(self):
        """sup over u of the operator norm of f(u) is 1/(min_{j<=M} beta_j s(0))."""
        spec = mult_spec("sublinear")
        expected = 1.0 / (np.min(spec.beta[:spec.M]) * spec.shape(0.0))
        got = 0.0
        for r in np.linspace(0, 20, 200):
            got = max(got, np.max(1.0 / spec.sigma(r)[:spec.M]))
        assert got == pytest.approx(expected)


class TestStochasticStep:
    def test_zero_noise_matches_deterministic(self):
        basis = EigenBasis(GRID, 16)
        u0 = random_u(np.random.default_rng(8))
        h = Field.from_function(GRID, lambda x: 0.2 * np.cos(x))
        cfg = SolverConfig(1e-3, 64, scheme="exp_euler")
        det = solve_S(u0, h, 1e-3, cfg)
        spec2 = MultiplicativeNoiseSpec(basis, "bounded", beta=1e-300 * np.ones(16))
        sto = stochastic_step(u0, spec2, h, 1e-3, stream(9))
        assert (det - sto).sobolev_norm(0) < 1e-12

    def test_mean_square_growth_bounded(self):
        """From u0 = 0, h = 0: E||u(t)||^2 stays below (sum beta^2) t."""
        spec = mult_spec("bounded")
        cfg = SolverConfig(5e-3, 64, scheme="exp_euler")
        stepper = SdeStepper(cfg, spec, None)
        rng = stream(10)
        c = np.zeros((256, 64), dtype=complex)
        t_final = 0.5
        for i in range(int(t_final / cfg.dt)):
            c = stepper.step(c, i * cfg.dt, rng)
        from kdvb.spectral import sobolev_norm_coeffs
        msq = np.mean(sobolev_norm_coeffs(c, GRID.wavenumbers, 0.0) ** 2)
        assert msq <= spec.hs_base ** 2 * t_final * 1.2

    def test_strong_order_half(self):
        """Strong error against a dt/16 reference scales like dt^{1/2 +- 0.2}."""
        spec = mult_spec("linear", L=3.0)
        rng = stream(11)
        n_paths, T = 64, 0.25
        n_fine = 3200
        dt_f = T / n_fine
        dW = np.sqrt(dt_f) * rng.standard_normal((n_paths, n_fine, 16))
        u0 = random_u(np.random.default_rng(12), scale=0.5)
        c0 = np.broadcast_to(u0.coeffs, (n_paths, 64)).copy()

        def run(n_steps):
            cfg = SolverConfig(T / n_steps, 64, scheme="exp_euler")
            stepper = SdeStepper(cfg, spec, None)
            group = n_fine // n_steps
            c = c0.copy()
            for i in range(n_steps):
                inc = dW[:, i * group:(i + 1) * group, :].sum(axis=1)
                c = stepper.step(c, i * cfg.dt, rng, dW=inc)
            return c

        ref = run(n_fine)
        dts, errs = [], []
        for n_steps in (200, 400, 800):
            c = run(n_steps)
            err = np.sqrt(np.mean(np.abs(c - ref) ** 2))
            dts.append(T / n_steps)
            errs.append(err)
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert 0.3 <= slope <= 0.7
