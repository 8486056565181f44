"""Quadratic steering of the linearized equation and the contraction test.

Problem (P): steer the linearization around a reference trajectory u_hat,

    w_t + Aw + (u_hat w)_x = chi Pi_m zeta,   w(0) = v0,

minimising J = (1/2) int ||zeta||^2 + (1/delta) ||P_N w(T)||^2.  The control
zeta lives in the span of the first m space-time eigenfunctions phi_q of the
rectangle Q; since those are L^2(Q)-orthonormal the cost is the squared
Euclidean norm of the coefficient vector.  The map zeta -> P_N w(T) is
affine (one homogeneous solve plus m source solves), so the minimizer comes
from a small symmetric positive-definite system.

The resulting feedback operator Upsilon: v0 -> zeta drives the full
nonlinear flow: starting from u0 near u_hat(0), the controlled solution
ends closer to u_hat(T) by a measurable factor q < 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from kdvb.spectral import EigenBasis, Field, TorusGrid, to_coeffs
from kdvb.dynamics import (
    SolverConfig,
    Trajectory,
    solve_linearized,
    solve_S,
    solve_trajectory,
)
from kdvb.forcing import LocalisedNoiseSpec, bump


@dataclass
class ControlProblemSpec:
    """Penalty, ranks, cutoff rectangle and reference trajectory for (P)."""

    delta: float
    N: int
    m: int
    chi_spec: LocalisedNoiseSpec
    T: float
    uhat: Trajectory | None = None
    n_points: int = 64
    dt: float = 2e-3

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.N < 1 or self.m < 1:
            raise ValueError("N and m must be >= 1")
        if self.m > self.chi_spec.n_modes:
            raise ValueError("m exceeds the control basis size")
        if not self.chi_spec.t2 < self.T + 1e-12:
            raise ValueError("control rectangle must sit inside (0, T)")

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.n_points)

    @property
    def solver_config(self) -> SolverConfig:
        return SolverConfig(self.dt, self.n_points)

    @cached_property
    def basis(self) -> EigenBasis:
        return EigenBasis(self.grid, self.grid.max_eigen_index)


class ControlOperator:
    """Precomputed pieces of the affine map zeta -> P_N w(T).

    The space-time control modes are separable, chi phi_q =
    [bump_x sin_q](x) * [bump_t sin_q](t); the spatial factors are Fourier
    coefficients computed once, the time factors are cheap scalars.
    """

    def __init__(self, spec: ControlProblemSpec):
        if spec.uhat is None:
            raise ValueError("spec.uhat must be set (reference trajectory)")
        self.spec = spec
        grid = spec.grid
        cs = spec.chi_spec
        qb = cs.qbasis
        x = grid.nodes
        sx = (x - cs.x1) / (cs.x2 - cs.x1)
        amp = 2.0 / np.sqrt(qb.Lx * qb.Lt)
        rows = []
        self._tmodes = []
        for alpha, mm, nn in qb.pairs[:spec.m]:
            vals = amp * bump(sx) * np.sin(mm * np.pi * np.clip(sx, 0, 1)) \
                * ((sx > 0) & (sx < 1))
            rows.append(to_coeffs(vals))
            self._tmodes.append(nn)
        self._cx = np.array(rows)                 # (m, n)
        self._cs = cs

    def time_factor(self, t: float) -> np.ndarray:
        """bump_t(t) sin(n pi s_t) for each control mode; zero outside (t1, t2)."""
        cs = self._cs
        st = (t - cs.t1) / (cs.t2 - cs.t1)
        if not 0.0 < st < 1.0:
            return np.zeros(self.spec.m)
        return bump(st) * np.sin(np.array(self._tmodes) * np.pi * st)

    def control_coeffs(self, zeta: np.ndarray):
        """Forcing function t -> coefficients of chi Pi_m zeta."""
        def fn(t: float):
            g = self.time_factor(t)
            if not np.any(g):
                return None
            return (zeta * g) @ self._cx
        return fn

    @cached_property
    def affine_parts(self):
        """(G, final_states): G maps zeta to P_N w(T) for zero initial data."""
        spec = self.spec
        grid = spec.grid
        m = spec.m
        ic = np.zeros((m, grid.n_points), dtype=complex)

        def source(t):
            g = self.time_factor(t)
            return g[:, None] * self._cx

        final = solve_linearized(Field(grid, ic), spec.uhat, source,
                                 spec.T, spec.solver_config)
        vecs = spec.basis.vector_from_field(final.coeffs, spec.N)  # (m, N)
        return vecs.T.copy()                                        # (N, m)

    def homogeneous_final(self, v0_coeffs: np.ndarray) -> np.ndarray:
        """P_N coordinates of the uncontrolled linearized flow at T."""
        spec = self.spec
        final = solve_linearized(Field(spec.grid, v0_coeffs), spec.uhat,
                                 None, spec.T, spec.solver_config)
        return spec.basis.vector_from_field(final.coeffs, spec.N)

    def normal_matrix(self) -> np.ndarray:
        G = self.affine_parts
        return np.eye(self.spec.m) + (2.0 / self.spec.delta) * G.T @ G


def solve_P(spec: ControlProblemSpec, v0: Field):
    """Minimizer of (P): returns (w trajectory, zeta coefficients, J value)."""
    op = ControlOperator(spec)
    G = op.affine_parts
    c0 = op.homogeneous_final(v0.coeffs)
    A = op.normal_matrix()
    rhs = -(2.0 / spec.delta) * G.T @ c0
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(rhs))):
        raise FloatingPointError("control assembly produced non-finite values")
    zeta = scipy.linalg.solve(A, rhs, assume_a="pos")
    w_traj = solve_linearized(v0, spec.uhat, op.control_coeffs(zeta),
                              spec.T, spec.solver_config,
                              save_every=max(1, int(round(spec.T / spec.dt)) // 200))
    pn_final = c0 + G @ zeta
    J = 0.5 * float(zeta @ zeta) + float(pn_final @ pn_final) / spec.delta
    return w_traj, zeta, J


def check_27(spec: ControlProblemSpec, v0: Field, solution) -> dict:
    """Ratio ((1/delta)||P_N w(T)||^2 + ||zeta||^2) / ||v0||^2 for a minimizer."""
    w_traj, zeta, _ = solution
    v0_sq = float(v0.sobolev_norm(0) ** 2)
    pn = spec.basis.vector_from_field(w_traj.coeffs[-1], spec.N)
    num = float(pn @ pn) / spec.delta + float(zeta @ zeta)
    if v0_sq == 0.0:
        return {"ratio": 0.0, "terminal_sq": float(pn @ pn),
                "control_sq": float(zeta @ zeta), "degenerate": True}
    return {"ratio": num / v0_sq, "terminal_sq": float(pn @ pn),
            "control_sq": float(zeta @ zeta), "degenerate": False}


def build_Upsilon(h, uhat0: Field, spec: ControlProblemSpec,
                  K: int | None = None):
    """Feedback matrix: coordinates of v0 in H_K -> optimal zeta coefficients.

    The reference trajectory is re-solved from (h, uhat0) when the spec does
    not already carry one.  The minimizer is linear in v0, so the matrix is
    -(I + (2/d) G^T G)^{-1} (2/d) G^T C0 with C0 assembled column-by-column.
    """
    if K is None:
        K = 2 * spec.N + 8
    K = min(K, spec.grid.max_eigen_index)
    if spec.uhat is None:
        spec.uhat = solve_trajectory(uhat0, h, spec.T, spec.solver_config)
    op = ControlOperator(spec)
    G = op.affine_parts
    stacked = spec.basis.field_from_vector(np.eye(K))          # (K, n)
    C0 = op.homogeneous_final(stacked).T                       # (N, K)
    A = op.normal_matrix()
    U = scipy.linalg.solve(A, -(2.0 / spec.delta) * G.T @ C0, assume_a="pos")
    return U, op


def contraction_test(u0: Field, uhat0: Field, h, spec: ControlProblemSpec,
                     K: int | None = None) -> dict:
    """Measured squeezing factor q = ||S(u0, h + control) - S(uhat0, h)|| / ||u0 - uhat0||."""
    grid = spec.grid
    v0 = u0 - uhat0
    d = float(v0.sobolev_norm(0))
    if d == 0.0:
        return {"q": 0.0, "d": 0.0, "degenerate": True}
    if spec.uhat is None:
        spec.uhat = solve_trajectory(uhat0, h, spec.T, spec.solver_config)
    U, op = build_Upsilon(h, uhat0, spec, K)
    Kd = U.shape[1]
    w0 = spec.basis.vector_from_field(v0.coeffs, Kd)
    zeta = U @ w0
    ctl = op.control_coeffs(zeta)
    from kdvb.dynamics import coeff_fn
    h_fn = coeff_fn(h, grid)

    def forcing(t):
        out = None if h_fn is None else h_fn(t)
        c = ctl(t)
        if c is None:
            return out
        return c if out is None else out + c
    u_end = solve_S(u0, forcing, spec.T, spec.solver_config)
    uhat_end = Field(grid, spec.uhat.at_time(spec.T))
    q = float((u_end - uhat_end).sobolev_norm(0)) / d
    return {"q": q, "d": d, "zeta": zeta, "degenerate": False}


def find_threshold_d(direction: Field, uhat0: Field, h,
                     spec: ControlProblemSpec, d_max: float = 1.0,
                     tol: float = 1e-3, max_iter: int = 20) -> dict:
    """Bisect the largest perturbation size d with measured q < 1.

    The direction field is normalized; candidates u0 = uhat0 + d * direction.
    """
    dirn = direction * (1.0 / float(direction.sobolev_norm(0)))

    def q_at(d):
        return contraction_test(uhat0 + dirn * d, uhat0, h, spec)["q"]

    lo, hi = 0.0, d_max
    if q_at(d_max) < 1.0:
        return {"d": d_max, "q": q_at(d_max), "saturated": True}
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo < tol * d_max:
            break
        if q_at(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return {"d": lo, "q": q_at(lo) if lo > 0 else 0.0, "saturated": False}
