"""Carleman weights, weighted-inequality checks and observability constants.

The weight family: a concave parabola phi(x) = -(x+b)^2 + b^2 glued
periodically across x = 0 (the same parabola shifted by one period lives on
the right piece), blended by a quintic Hermite polynomial inside the control
window omega = (l1, l2) where no sign condition is imposed.  Shifted so that
psi = phi + C0 satisfies psi > 0 and 2 max psi < 3 min psi.  In time the
singular factor xi(t) = 1/(t(T-t)) multiplies psi.

All weighted integrals are evaluated in log-space: e^{-4 s phi_hat} is far
below the double-precision floor for realistic s, so each quadrature factors
out its maximal exponent and sums the remainder with logsumexp.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from kdvb.spectral import (
    Field,
    TorusGrid,
    TWO_PI,
    deriv_coeffs,
    l2_inner_coeffs,
    sobolev_norm_coeffs,
    to_coeffs,
    to_values,
)
from kdvb.dynamics import (
    SolverConfig,
    Stepper,
    Trajectory,
    coeff_fn,
    solve_adjoint,
)


# ---------------------------------------------------------------------------
# weights

def _hermite_quintic(x0, x1, f0, d0, dd0, f1, d1, dd1):
    """Degree-5 polynomial matching value/1st/2nd derivatives at x0 and x1."""
    A = np.zeros((6, 6))
    rhs = np.array([f0, d0, dd0, f1, d1, dd1], dtype=float)
    for row, (pt, order) in enumerate([(x0, 0), (x0, 1), (x0, 2),
                                       (x1, 0), (x1, 1), (x1, 2)]):
        for p in range(6):
            if p >= order:
                c = 1.0
                for q in range(order):
                    c *= (p - q)
                A[row, p] = c * pt ** (p - order)
    return np.polynomial.Polynomial(np.linalg.solve(A, rhs))


@dataclass
class CarlemanWeights:
    """psi(x), xi(t) and the derived extremal weights phi_hat, phi_check."""

    l1: float
    l2: float
    T: float
    b_param: float
    C0_shift: float
    _blend: np.polynomial.Polynomial = dc_field(repr=False, default=None)

    def __post_init__(self):
        if not 0 < self.l1 < self.l2 < TWO_PI:
            raise ValueError("need 0 < l1 < l2 < 2*pi")
        if self.b_param <= TWO_PI - self.l2:
            raise ValueError("b_param must exceed 2*pi - l2")
        if self._blend is None:
            b = self.b_param
            f = lambda x: -(x + b) ** 2 + b ** 2
            fr = lambda x: -(x - TWO_PI + b) ** 2 + b ** 2
            self._blend = _hermite_quintic(
                self.l1, self.l2,
                f(self.l1), -2 * (self.l1 + b), -2.0,
                fr(self.l2), -2 * (self.l2 - TWO_PI + b), -2.0)
        self._validate()

    # -- spatial weight ------------------------------------------------------
    def phi_x(self, x):
        """The unshifted concave profile, periodic and C^2 on the torus."""
        x = np.mod(np.asarray(x, dtype=float), TWO_PI)
        b = self.b_param
        left = -(x + b) ** 2 + b ** 2
        right = -(x - TWO_PI + b) ** 2 + b ** 2
        blend = self._blend(x)
        return np.where(x <= self.l1, left,
                        np.where(x >= self.l2, right, blend))

    def psi(self, x):
        return self.phi_x(x) + self.C0_shift

    def psi_prime(self, x):
        x = np.mod(np.asarray(x, dtype=float), TWO_PI)
        b = self.b_param
        der = self._blend.deriv()
        return np.where(x <= self.l1, -2 * (x + b),
                        np.where(x >= self.l2, -2 * (x - TWO_PI + b), der(x)))

    def psi_second(self, x):
        x = np.mod(np.asarray(x, dtype=float), TWO_PI)
        der2 = self._blend.deriv(2)
        return np.where((x <= self.l1) | (x >= self.l2), -2.0, der2(x))

    # -- extremes and time factor ---------------------------------------------
    @cached_property
    def max_psi(self) -> float:
        return float(np.max(self.psi(np.linspace(0, TWO_PI, 4096, endpoint=False))))

    @cached_property
    def min_psi(self) -> float:
        return float(np.min(self.psi(np.linspace(0, TWO_PI, 4096, endpoint=False))))

    def xi(self, t):
        t = np.asarray(t, dtype=float)
        return 1.0 / (t * (self.T - t))

    def phi(self, x, t):
        return np.asarray(self.psi(x)) * np.asarray(self.xi(t))

    def phi_hat(self, t):
        return self.max_psi * self.xi(t)

    def phi_check(self, t):
        return self.min_psi * self.xi(t)

    @property
    def ratio_23(self) -> float:
        """2 max psi / (3 min psi); must be < 1."""
        return 2 * self.max_psi / (3 * self.min_psi)

    # -- validation -----------------------------------------------------------
    def _validate(self):
        xs = np.linspace(0, TWO_PI, 4096, endpoint=False)
        psi = self.psi(xs)
        if np.min(psi) <= 0:
            raise ValueError("psi must be positive; increase C0_shift")
        outside = (xs <= self.l1) | (xs >= self.l2)
        if np.min(np.abs(self.psi_prime(xs[outside]))) <= 0:
            raise ValueError("psi' vanishes outside the window")
        if np.max(self.psi_second(xs[outside])) >= 0:
            raise ValueError("psi'' must be negative outside the window")
        if self.ratio_23 >= 1.0:
            raise ValueError("2 max psi < 3 min psi violated; increase C0_shift")


def build_weights(l1: float, l2: float, T: float,
                  b_param: float | None = None) -> CarlemanWeights:
    """Construct the weight family for the window (l1, l2) on horizon T."""
    if not 0 < l1 < l2 < TWO_PI:
        raise ValueError("need 0 < l1 < l2 < 2*pi")
    if T <= 0:
        raise ValueError("T must be positive")
    if b_param is None:
        b_param = (TWO_PI - l2) + 1.0
    # pick the smallest admissible shift (2 max phi - 3 min phi) + 10% margin
    probe = CarlemanWeights.__new__(CarlemanWeights)
    probe.l1, probe.l2, probe.T, probe.b_param = l1, l2, T, b_param
    b = b_param
    f = lambda x: -(x + b) ** 2 + b ** 2
    fr = lambda x: -(x - TWO_PI + b) ** 2 + b ** 2
    probe._blend = _hermite_quintic(l1, l2, f(l1), -2 * (l1 + b), -2.0,
                                    fr(l2), -2 * (l2 - TWO_PI + b), -2.0)
    probe.C0_shift = 0.0
    xs = np.linspace(0, TWO_PI, 4096, endpoint=False)
    phis = probe.phi_x(xs)
    c_min = 2 * np.max(phis) - 3 * np.min(phis)
    return CarlemanWeights(l1, l2, T, b_param, 1.1 * c_min, probe._blend)


# ---------------------------------------------------------------------------
# log-space quadrature helpers

def _gl(a: float, b: float, n: int):
    g, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * g + 0.5 * (a + b), 0.5 * (b - a) * w


def _log_integral(log_terms: np.ndarray, weights: np.ndarray) -> float:
    """log( sum_q w_q exp(L_q) ) with max-exponent factoring; -inf if empty."""
    keep = np.isfinite(log_terms)
    if not np.any(keep):
        return -np.inf
    return float(logsumexp(log_terms[keep], b=weights[keep]))


def _trig_eval(coeffs: np.ndarray, k: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the Fourier series at arbitrary points x; shape (..., len(x))."""
    E = np.exp(1j * np.outer(k, x))
    return np.real(coeffs @ E)


def _delta_t(w: CarlemanWeights, s: float, factor: float = 4.0) -> float:
    """Time inset so the discarded tail of e^{-factor*s*phi_hat} is < 1e-14."""
    T = w.T
    xi_min = 4.0 / T ** 2
    xi_cut = xi_min + np.log(1e14) / (factor * s * w.max_psi)
    disc = T ** 2 - 4.0 / xi_cut
    if disc <= 0:
        return 0.25 * T
    return 0.5 * (T - np.sqrt(disc))


@dataclass
class CarlemanReport:
    """Both sides of a weighted inequality, kept in logs to dodge underflow."""

    lhs: float
    rhs: float
    log_lhs: float
    log_rhs: float

    def __iter__(self):
        return iter((self.lhs, self.rhs))

    @property
    def ratio(self) -> float:
        if self.log_lhs == -np.inf:
            return 0.0
        return float(np.exp(self.log_lhs - self.log_rhs))

    @property
    def log_ratio(self) -> float:
        """log(lhs/rhs); usable even when the ratio underflows double range."""
        if self.log_lhs == -np.inf:
            return -np.inf
        return float(self.log_lhs - self.log_rhs)


def carleman_sides(v: Trajectory, g, w: CarlemanWeights, s: float,
                   nt_quad: int = 64, nx_quad: int = 64) -> CarlemanReport:
    """Evaluate both sides of the parabolic Carleman estimate for v.

    LHS = int (s xi v_xx^2 + s^3 xi^3 v_x^2 + s^5 xi^5 v^2) e^{-4 s phi_hat}
    RHS = s^5 int g^2 e^{-2 s phi_hat}
          + s^5 int_{D_omega} xi^5 e^{-6 s phi_check + 2 s phi_hat} v^2
    """
    if s <= 0:
        raise ValueError("s must be positive")
    grid = v.grid
    k = grid.wavenumbers
    T = w.T
    dt_in = _delta_t(w, s)
    tq, wt = _gl(dt_in, T - dt_in, nt_quad)
    xq, wx = _gl(w.l1, w.l2, nx_quad)
    g_fn = coeff_fn(g, grid)

    log_lhs_t = np.full(nt_quad, -np.inf)
    log_rhs_g = np.full(nt_quad, -np.inf)
    log_rhs_w = np.full(nt_quad, -np.inf)
    for q, t in enumerate(tq):
        c = v.at_time(t)
        xi = float(w.xi(t))
        n0 = sobolev_norm_coeffs(c, k, 0.0) ** 2                # int v^2
        n1 = float(np.sum(2 * np.pi * k ** 2 * np.abs(c) ** 2))  # int v_x^2
        n2 = float(np.sum(2 * np.pi * k ** 4 * np.abs(c) ** 2))  # int v_xx^2
        bracket = s * xi * n2 + s ** 3 * xi ** 3 * n1 + s ** 5 * xi ** 5 * n0
        if bracket > 0:
            log_lhs_t[q] = -4 * s * w.phi_hat(t) + np.log(bracket)
        if g_fn is not None:
            gc = g_fn(t)
            if gc is not None:
                gn = float(sobolev_norm_coeffs(np.asarray(gc), k, 0.0) ** 2)
                if gn > 0:
                    log_rhs_g[q] = -2 * s * w.phi_hat(t) + np.log(gn)
        vx = _trig_eval(c, k, xq)
        omega_int = float(np.dot(wx, vx ** 2))
        if omega_int > 0:
            log_rhs_w[q] = (-6 * s * w.phi_check(t) + 2 * s * w.phi_hat(t)
                            + 5 * np.log(xi) + np.log(omega_int))

    log_lhs = _log_integral(log_lhs_t, wt)
    log_rhs = np.logaddexp(
        np.log(s ** 5) + _log_integral(log_rhs_g, wt),
        np.log(s ** 5) + _log_integral(log_rhs_w, wt))
    lhs = float(np.exp(log_lhs)) if np.isfinite(log_lhs) else 0.0
    rhs = float(np.exp(log_rhs)) if np.isfinite(log_rhs) else 0.0
    return CarlemanReport(lhs, rhs, log_lhs, log_rhs)


def lemma_cl2_sides(q, w: CarlemanWeights, s: float, grid: TorusGrid,
                    qt=None, nt_quad: int = 64, nx_quad: int = 64,
                    dt_fd: float = 1e-6) -> CarlemanReport:
    """Both sides of the conjugated estimate for Lq = q_t + q_xxx.

    q is a callable q(x, t) smooth and 2pi-periodic in x; qt is its time
    derivative (finite-differenced when omitted).  With w_c = e^{-s phi} q,

    LHS = int (s phi w_xx^2 + s^3 phi^3 w_x^2 + s^5 phi^5 w^2)
    RHS = int |Lq|^2 e^{-2 s phi} + int_{D_omega} (same triple as LHS).

    Each time slice factors out e^{-2 s phi_check(t)} so the remaining
    exponent is bounded; the slice integrals then accumulate with logsumexp.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    k = grid.wavenumbers
    x = grid.nodes
    T = w.T
    dt_in = _delta_t(w, s, factor=2.0)
    tq, wt = _gl(dt_in, T - dt_in, nt_quad)
    xq, wxq = _gl(w.l1, w.l2, nx_quad)
    psi = w.psi(x)
    psi_q = w.psi(xq)
    dx = grid.quad_weight

    log_lhs_t = np.full(nt_quad, -np.inf)
    log_rhs_L = np.full(nt_quad, -np.inf)
    log_rhs_w = np.full(nt_quad, -np.inf)
    for iq, t in enumerate(tq):
        xi = float(w.xi(t))
        m = w.min_psi * xi                        # phi_check(t) = min_x phi
        phi_rel = psi * xi - m                    # >= 0, bounded
        # w_tilde = e^{-s (phi - m)} q: representable in doubles
        qv = np.asarray(q(x, t), dtype=float)
        wt_val = np.exp(-s * phi_rel) * qv
        cw = to_coeffs(wt_val)
        wx = to_values(deriv_coeffs(cw, k, 1))
        wxx = to_values(deriv_coeffs(cw, k, 2))
        phi_full = psi * xi
        bracket = (s * phi_full * wxx ** 2
                   + s ** 3 * phi_full ** 3 * wx ** 2
                   + s ** 5 * phi_full ** 5 * wt_val ** 2)
        tot = float(np.sum(bracket) * dx)
        if tot > 0:
            log_lhs_t[iq] = -2 * s * m + np.log(tot)
        # Lq = q_t + q_xxx, weighted by e^{-2 s phi} = e^{-2sm} e^{-2s phi_rel}
        if qt is not None:
            qtv = np.asarray(qt(x, t), dtype=float)
        else:
            qtv = (np.asarray(q(x, t + dt_fd), dtype=float)
                   - np.asarray(q(x, t - dt_fd), dtype=float)) / (2 * dt_fd)
        qxxx = to_values(deriv_coeffs(to_coeffs(qv), k, 3))
        Lq = qtv + qxxx
        rh = float(np.sum(Lq ** 2 * np.exp(-2 * s * phi_rel)) * dx)
        if rh > 0:
            log_rhs_L[iq] = -2 * s * m + np.log(rh)
        # omega part: same triple restricted to the window
        phi_rel_q = psi_q * xi - m
        qvq = np.asarray(q(xq, t), dtype=float)
        wt_q = np.exp(-s * phi_rel_q) * qvq
        wx_q = _trig_eval(deriv_coeffs(cw, k, 1), k, xq)
        wxx_q = _trig_eval(deriv_coeffs(cw, k, 2), k, xq)
        phi_q_full = psi_q * xi
        br_q = (s * phi_q_full * wxx_q ** 2
                + s ** 3 * phi_q_full ** 3 * wx_q ** 2
                + s ** 5 * phi_q_full ** 5 * wt_q ** 2)
        tot_q = float(np.dot(wxq, br_q))
        if tot_q > 0:
            log_rhs_w[iq] = -2 * s * m + np.log(tot_q)

    log_lhs = _log_integral(log_lhs_t, wt)
    log_rhs = np.logaddexp(_log_integral(log_rhs_L, wt),
                           _log_integral(log_rhs_w, wt))
    lhs = float(np.exp(log_lhs)) if np.isfinite(log_lhs) else 0.0
    rhs = float(np.exp(log_rhs)) if np.isfinite(log_rhs) else 0.0
    return CarlemanReport(lhs, rhs, log_lhs, log_rhs)


# ---------------------------------------------------------------------------
# linear regularity (forward linear system)

def solve_linear_system(y0: Field, a, b, g, T: float, cfg: SolverConfig,
                        save_every: int = 1) -> Trajectory:
    """Forward solve of y_t + y_xxx - y_xx + a y_x + b y = g from y(0) = y0."""
    grid = cfg.grid
    k = grid.wavenumbers
    n = max(int(round(T / cfg.dt)), 1)
    cfg_run = SolverConfig(T / n, cfg.n_points, cfg.dealias_on, cfg.scheme,
                           cfg.blowup_threshold)
    a_fn, b_fn, g_fn = (coeff_fn(o, grid) for o in (a, b, g))
    stepper = Stepper(cfg_run, symbol=grid.a_symbol - 1.0)

    def nl(c, t):
        out = np.zeros_like(c)
        if a_fn is not None:
            out = out - to_coeffs(to_values(a_fn(t)) * to_values(deriv_coeffs(c, k, 1)))
        if b_fn is not None:
            out = out - to_coeffs(to_values(b_fn(t)) * to_values(c))
        if g_fn is not None:
            gc = g_fn(t)
            if gc is not None:
                out = out + gc
        return out

    c = y0.coeffs
    times, states = [0.0], [c]
    for i in range(n):
        c = stepper.step(c, i * cfg_run.dt, nl)
        if (i + 1) % save_every == 0 or i == n - 1:
            times.append((i + 1) * cfg_run.dt)
            states.append(c)
    return Trajectory(y0.grid, np.array(times), np.array(states))


def x_norm(traj: Trajectory, i: int = 0) -> float:
    """The X_i norm: sup_t ||y||_i plus the L^2-in-time H^{i+1} seminorm."""
    k = traj.grid.wavenumbers
    sup = float(np.max(sobolev_norm_coeffs(traj.coeffs, k, float(i))))
    h = sobolev_norm_coeffs(traj.coeffs, k, float(i + 1)) ** 2
    integral = float(np.trapezoid(h, traj.times))
    return sup + np.sqrt(integral)


# ---------------------------------------------------------------------------
# observability

@dataclass
class ObservabilityProblem:
    """Data for the adjoint observation maps L0: v_T -> v(0), L_omega / Pi_M."""

    N: int
    T: float
    window: tuple[float, float] | None = None
    chi_spec: object = None          # LocalisedNoiseSpec for the truncated map
    M: int | None = None
    a: object = None
    b: object = None
    n_points: int = 64
    dt: float = 2e-3

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.window is None and self.chi_spec is None:
            raise ValueError("need a window or a cutoff spec")

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.n_points)


def _adjoint_columns(prob: ObservabilityProblem, K: int,
                     nt_quad: int = 32):
    """Solve the adjoint for each eigenbasis vector e_1..e_K of H_K.

    Returns (v0_coeffs (K, n), sampler) where sampler(t) gives the stacked
    coefficient array of all columns at time t.
    """
    from kdvb.spectral import EigenBasis
    grid = prob.grid
    K = min(K, grid.max_eigen_index)
    basis = EigenBasis(grid, K)
    stacked = basis.field_from_vector(np.eye(K))      # (K, n)
    cfg = SolverConfig(prob.dt, prob.n_points)
    traj = solve_adjoint(Field(grid, stacked), prob.a, prob.b, None,
                         prob.T, cfg)
    v0 = traj.at_time(0.0)                            # (K, n)
    return K, v0, traj


def _gram_l0(v0: np.ndarray) -> np.ndarray:
    return np.real(2 * np.pi * v0 @ np.conj(v0).T)


def _sharp_constant(G0: np.ndarray, Gobs: np.ndarray):
    """Largest generalized eigenvalue of G0 x = C Gobs x; errors if singular.

    Both Grams are quadratic in the same adjoint columns, so the per-mode
    dissipation scale multiplies matching rows and columns of each; Jacobi
    equilibration by diag(Gobs) cancels it without changing the generalized
    spectrum, leaving the singularity test to detect genuine linear
    dependence of the observations rather than mere scale disparity.
    """
    diag = np.diag(Gobs)
    if np.any(diag <= 0):
        raise np.linalg.LinAlgError(
            "observation Gram matrix is singular to machine precision")
    d = 1.0 / np.sqrt(diag)
    G0_s = G0 * d[:, None] * d[None, :]
    Gobs_s = Gobs * d[:, None] * d[None, :]
    evals_obs = np.linalg.eigvalsh(Gobs_s)
    if evals_obs[-1] <= 0 or evals_obs[0] <= 1e-12 * evals_obs[-1]:
        raise np.linalg.LinAlgError(
            "observation Gram matrix is singular to machine precision")
    vals, vecs = scipy.linalg.eigh(G0_s, Gobs_s)
    return float(vals[-1]), vals, d * vecs[:, -1]


def observability_constant(prob: ObservabilityProblem, nt_quad: int = 32,
                           nx_quad: int = 32, rtol: float = 0.01) -> dict:
    """Sharp constant C with ||v(0)||^2 <= C int_{D_omega} v^2 dx dt.

    The data space H_K starts at K = 2N + 16 and doubles until the constant
    moves by less than rtol (or the grid is exhausted).
    """
    if prob.window is None:
        raise ValueError("observability_constant needs an explicit window")
    l1, l2 = prob.window
    grid = prob.grid
    k = grid.wavenumbers
    tq, wt = _gl(0.0, prob.T, nt_quad)
    xq, wx = _gl(l1, l2, nx_quad)

    def constant_at(K):
        K_eff, v0, traj = _adjoint_columns(prob, K)
        G0 = _gram_l0(v0)
        Gw = np.zeros((K_eff, K_eff))
        for t, w_t in zip(tq, wt):
            vx = _trig_eval(traj.at_time(t), k, xq)    # (K, nx)
            Gw += w_t * (vx * wx) @ vx.T
        C, spectrum, vec = _sharp_constant(G0, Gw)
        return K_eff, C, spectrum, vec, G0, Gw

    K = 2 * prob.N + 16
    K_eff, C, spectrum, vec, G0, Gw = constant_at(K)
    capped = False
    moved = np.inf
    while K_eff < grid.max_eigen_index:
        try:
            K2_eff, C2, spectrum2, vec2, G02, Gw2 = constant_at(2 * K_eff)
        except np.linalg.LinAlgError:
            # the extra modes' observations are linearly dependent at this
            # discretization; the constant has converged at the previous
            # resolution
            capped = True
            break
        moved = abs(C2 - C) / max(C, 1e-300)
        K_eff, C, spectrum, vec, G0, Gw = K2_eff, C2, spectrum2, vec2, G02, Gw2
        if moved < rtol:
            break
    return {"C": C, "spectrum": spectrum, "eigvec": vec, "K": K_eff,
            "G0": G0, "G_obs": Gw, "refinement_capped": capped,
            "last_move": float(moved)}


def truncated_observability(prob: ObservabilityProblem, nt_quad: int = 48,
                            nx_quad: int = 48, rtol: float = 0.05) -> dict:
    """Observability through the truncated, cut-off observation Pi_M(chi v).

    Scans M upward until the constant is finite and within rtol of its value
    at 2M; the data space is H_N.  Rank-deficient observation Grams are
    reported as an infinite constant at that M.
    """
    spec = prob.chi_spec
    if spec is None:
        raise ValueError("truncated_observability needs a cutoff spec")
    qb = spec.qbasis
    grid = prob.grid
    k = grid.wavenumbers
    tq, wt = _gl(spec.t1, spec.t2, nt_quad)
    xq, wx = _gl(spec.x1, spec.x2, nx_quad)

    K_eff, v0, traj = _adjoint_columns(prob, prob.N)
    G0 = _gram_l0(v0)
    chi = spec.chi(xq[None, :], tq[:, None])           # (nt, nx)
    vxt = np.empty((K_eff, nt_quad, nx_quad))
    for iq, t in enumerate(tq):
        vxt[:, iq, :] = _trig_eval(traj.at_time(t), k, xq)
    m_max = spec.n_modes
    phi_all = np.empty((m_max, nt_quad, nx_quad))
    for i in range(m_max):
        phi_all[i] = qb.phi(i, xq[None, :], tq[:, None])
    # B[q, i] = <chi v_i, phi_q>_{L^2(D_T)}
    wgt = wt[:, None] * wx[None, :]
    B_full = np.einsum("qtx,ktx->qk", phi_all * (chi * wgt), vxt)

    def constant_at(M):
        B = B_full[:M]
        Gm = B.T @ B
        try:
            C, spectrum, vec = _sharp_constant(G0, Gm)
        except np.linalg.LinAlgError:
            return np.inf, None, None
        return C, spectrum, vec

    history = {}
    for M in range(prob.N, m_max // 2 + 1):
        if M not in history:
            history[M] = constant_at(M)[0]
        if not np.isfinite(history[M]):
            continue
        M2 = 2 * M
        if M2 not in history:
            history[M2] = constant_at(M2)[0]
        if np.isfinite(history[M2]) and \
                abs(history[M] - history[M2]) <= rtol * history[M2]:
            C, spectrum, vec = constant_at(M)
            return {"M": M, "C": C, "spectrum": spectrum, "eigvec": vec,
                    "history": history, "stable": True}
    return {"M": None, "C": np.inf, "history": history, "stable": False}
