"""Nudged (observer) dynamics and synchronization diagnostics.

Two copies of the stochastic equation are driven by the same Wiener path;
the second receives the feedback +lambda P_N(u - v) on the first N modes of
the eigenbasis.  The module tracks the exponential weight

    Gamma(t) = (lambda_N / 2 - L_g^2) t - C0 int_0^t ||u(s)||_1^2 ds,

the associated supermartingale e^{Gamma} ||u - v||^2, the stopping times that
keep Gamma under control, and the Girsanov-type shift that represents the
feedback as a drift in the noise space.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from kdvb.rng import stream
from kdvb.spectral import (
    EigenBasis,
    Field,
    TorusGrid,
    project_eigen_coeffs,
    sobolev_norm_coeffs,
)
from kdvb.dynamics import SolverConfig
from kdvb.forcing import MultiplicativeNoiseSpec, SdeStepper, f_apply


@dataclass
class NudgingConfig:
    """Observer setup: N observed modes and feedback gain (default lambda_N/2)."""

    N: int
    lam: float | None = None
    shared_noise: bool = True
    C0_estimate: float | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.lam is None:
            self.lam = self.lambda_N / 2.0
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")

    @property
    def lambda_N(self) -> float:
        return EigenBasis.eigenvalue(self.N)


@dataclass
class SyncReport:
    """Ensemble time series of the coupled pair; arrays indexed (time, path)."""

    times: np.ndarray
    w_sq: np.ndarray            # ||u - v||^2
    u_h1_int: np.ndarray        # int_0^t ||u||_1^2 ds
    gamma: np.ndarray           # Gamma(t)
    lambda_N: float
    L_g: float
    C0: float
    fit: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if abs(self.gamma[0]).max() != 0.0:
            raise ValueError("Gamma(0) must vanish")

    @property
    def n_paths(self) -> int:
        return self.w_sq.shape[1]

    @property
    def mean_sq_error(self) -> np.ndarray:
        return self.w_sq.mean(axis=1)

    @property
    def lyapunov(self) -> np.ndarray:
        """e^{Gamma(t)} ||w(t)||^2 per path."""
        return np.exp(self.gamma) * self.w_sq


def fit_exponential(times: np.ndarray, series: np.ndarray,
                    floor: float = 1e-300) -> dict:
    """Least-squares fit of log(series) = intercept - rate * t."""
    keep = series > floor
    t, y = times[keep], np.log(series[keep])
    if t.size < 3:
        return {"rate": np.nan, "intercept": np.nan, "r2": np.nan,
                "model": "exponential"}
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else np.nan
    return {"rate": -slope, "intercept": intercept, "r2": r2,
            "model": "exponential"}


def fit_power_law(times: np.ndarray, series: np.ndarray,
                  floor: float = 1e-300) -> dict:
    """Fit series ~ C t^{-q}; returns exponent q and goodness of fit."""
    keep = (series > floor) & (times > 0)
    t, y = np.log(times[keep]), np.log(series[keep])
    if t.size < 3:
        return {"rate": np.nan, "intercept": np.nan, "r2": np.nan,
                "model": "power"}
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else np.nan
    return {"rate": -slope, "intercept": intercept, "r2": r2, "model": "power"}


class CoupledStepper:
    """Advances (u, v) under shared noise; v gets +lam P_N(u - v) in its drift."""

    def __init__(self, cfg: SolverConfig, ncfg: NudgingConfig,
                 spec: MultiplicativeNoiseSpec | None, h=None):
        self.cfg = cfg
        self.ncfg = ncfg
        self.spec = spec
        self.grid = cfg.grid
        if spec is None:
            basis = EigenBasis(cfg.grid, min(16, cfg.grid.max_eigen_index))
            spec = MultiplicativeNoiseSpec(basis, "bounded",
                                           beta=np.full(16, 1e-300))
            self._silent = True
        else:
            self._silent = False
        self._sde = SdeStepper(cfg, spec, h)
        self._spec_eff = spec

    def _dW(self, shape_lead, rng):
        if self._silent:
            return np.zeros(shape_lead + (self._spec_eff.n_modes,))
        return np.sqrt(self.cfg.dt) * rng.standard_normal(
            shape_lead + (self._spec_eff.n_modes,))

    def step_pair(self, cu: np.ndarray, cv: np.ndarray, t: float,
                  rng: np.random.Generator | None = None,
                  dWu: np.ndarray | None = None,
                  dWv: np.ndarray | None = None):
        if dWu is None:
            dWu = self._dW(cu.shape[:-1], rng)
        if dWv is None:
            dWv = dWu if self.ncfg.shared_noise else self._dW(cv.shape[:-1], rng)
        cu_next = self._sde.step(cu, t, rng, dW=dWu)
        feedback = self.ncfg.lam * project_eigen_coeffs(
            cu - cv, self.grid.n_points, self.ncfg.N)
        inc = self._sde.noise_increment(cv, rng, dW=dWv)
        drift = self._sde.drift(cv, t) + feedback
        cv_next = self._sde._stepper._E_full * (cv + self.cfg.dt * drift + inc)
        if self.cfg.dealias_on:
            from kdvb.spectral import dealias_coeffs
            cv_next = dealias_coeffs(cv_next, self.grid.dealias_mask)
        return cu_next, self._sde._stepper._guard(cv_next)


def step_nudged(v: Field, u: Field, cfg: NudgingConfig,
                spec: MultiplicativeNoiseSpec | None, h, dt: float,
                rng: np.random.Generator, dW: np.ndarray | None = None) -> Field:
    """One exponential Euler step of the nudged copy around the observed u."""
    scfg = SolverConfig(dt, v.grid.n_points, scheme="exp_euler")
    cs = CoupledStepper(scfg, cfg, spec, h)
    sde = cs._sde
    if dW is None:
        dW = cs._dW(v.coeffs.shape[:-1], rng)
    feedback = cfg.lam * project_eigen_coeffs(
        u.coeffs - v.coeffs, v.grid.n_points, cfg.N)
    inc = sde.noise_increment(v.coeffs, rng, dW=dW)
    drift = sde.drift(v.coeffs, 0.0) + feedback
    out = sde._stepper._E_full * (v.coeffs + dt * drift + inc)
    if scfg.dealias_on:
        from kdvb.spectral import dealias_coeffs
        out = dealias_coeffs(out, v.grid.dealias_mask)
    return Field(v.grid, sde._stepper._guard(out))


def estimate_C0(grid: TorusGrid, cu: np.ndarray, cv: np.ndarray) -> float:
    """Smallest C0 with |(B(u)-B(v), w)| <= (C0/2)||u||_1^2 ||w||^2 + ||w||_1^2/2.

    Evaluated along the sampled states (any leading axes); w = u - v.
    """
    from kdvb.dynamics import nonlinearity_coeffs
    from kdvb.spectral import l2_inner_coeffs
    k = grid.wavenumbers
    w = cu - cv
    bu = nonlinearity_coeffs(cu, grid)
    bv = nonlinearity_coeffs(cv, grid)
    inner = np.abs(l2_inner_coeffs(bu - bv, w))
    w_l2 = sobolev_norm_coeffs(w, k, 0.0) ** 2
    w_h1 = sobolev_norm_coeffs(w, k, 1.0) ** 2
    u_h1 = sobolev_norm_coeffs(cu, k, 1.0) ** 2
    denom = u_h1 * w_l2
    need = 2.0 * (inner - 0.5 * w_h1)
    # below ~1e-12 the difference B(u) - B(v) is pure roundoff and the ratio
    # is meaningless noise
    ok = (denom > 1e-14) & (w_l2 > 1e-12)
    if not np.any(ok & (need > 0)):
        return 0.0
    return float(np.max(need[ok] / denom[ok]))


def run_sync(u0: Field, v0: Field, cfg: NudgingConfig,
             spec: MultiplicativeNoiseSpec | None, h, T: float, dt: float,
             n_paths: int = 1, seed: int = 0, save_every: int = 1) -> SyncReport:
    """Integrate the coupled pair over [0, T] and assemble the sync report."""
    scfg = SolverConfig(dt, u0.grid.n_points, scheme="exp_euler")
    grid = u0.grid
    k = grid.wavenumbers
    cs = CoupledStepper(scfg, cfg, spec, h)
    cu = np.broadcast_to(u0.coeffs, (n_paths, grid.n_points)).copy()
    cv = np.broadcast_to(v0.coeffs, (n_paths, grid.n_points)).copy()
    rngs = [stream(seed, path=p) for p in range(n_paths)]

    n = max(int(round(T / dt)), 1)
    times = [0.0]
    w_sq = [sobolev_norm_coeffs(cu - cv, k, 0.0) ** 2]
    h1_int = [np.zeros(n_paths)]
    acc = np.zeros(n_paths)
    estimate = cfg.C0_estimate is None
    C0_run = estimate_C0(grid, cu, cv) if estimate else 0.0
    nm = cs._spec_eff.n_modes
    for i in range(n):
        u_h1 = sobolev_norm_coeffs(cu, k, 1.0) ** 2
        if cs._silent:
            dWu = np.zeros((n_paths, nm))
        else:
            dWu = np.sqrt(dt) * np.stack(
                [r.standard_normal(nm) for r in rngs])
        if cfg.shared_noise or cs._silent:
            dWv = dWu
        else:
            dWv = np.sqrt(dt) * np.stack(
                [r.standard_normal(nm) for r in rngs])
        cu, cv = cs.step_pair(cu, cv, i * dt, dWu=dWu, dWv=dWv)
        acc = acc + dt * u_h1
        if estimate:
            C0_run = max(C0_run, estimate_C0(grid, cu, cv))
        if (i + 1) % save_every == 0 or i == n - 1:
            times.append((i + 1) * dt)
            w_sq.append(sobolev_norm_coeffs(cu - cv, k, 0.0) ** 2)
            h1_int.append(acc.copy())

    times = np.array(times)
    w_sq = np.array(w_sq)
    h1_int = np.array(h1_int)
    L_g = 0.0 if spec is None else spec.constants["L_g"]
    C0 = C0_run if estimate else cfg.C0_estimate
    gamma = (cfg.lambda_N / 2.0 - L_g ** 2) * times[:, None] - C0 * h1_int
    mean_sq = w_sq.mean(axis=1)
    # ignore the stretch where the error has collapsed to roundoff: it is
    # flat there and would bias the decay fit
    floor = 1e-20 * max(float(mean_sq[0]), 1e-280)
    fit = fit_exponential(times, mean_sq, floor=floor)
    if spec is not None and spec.mode in ("sublinear", "linear"):
        fit = {"exponential": fit,
               "power": fit_power_law(times, mean_sq, floor=floor),
               "model": "exponential+power"}
    report = SyncReport(times, w_sq, h1_int, gamma,
                        cfg.lambda_N, L_g, C0, fit)
    return report


def gamma_supermartingale_check(report: SyncReport,
                                floor: float = 1e-20) -> dict:
    """Ensemble check of E e^{Gamma} ||w||^2 + (lambda_N/2) E int e^{Gamma} ||w||^2.

    Returns the residual series LHS(t) - ||w(0)||^2, its Monte-Carlo standard
    error and violation flags (residual beyond 3 standard errors).  Times
    where the mean-square error has collapsed to the numerical floor are
    excluded (the weight e^{Gamma} is meaningless against roundoff there).
    """
    t = report.times
    ly = report.lyapunov                      # (nt, paths)
    dt = np.diff(t)
    integral = np.zeros_like(ly)
    # trapezoid accumulation of int_0^t e^Gamma ||w||^2 ds, per path
    integral[1:] = np.cumsum(0.5 * dt[:, None] * (ly[1:] + ly[:-1]), axis=0)
    per_path = ly + 0.5 * report.lambda_N * integral
    lhs = per_path.mean(axis=1)
    stderr = per_path.std(axis=1, ddof=1) / np.sqrt(report.n_paths) \
        if report.n_paths > 1 else np.zeros_like(lhs)
    w0_sq = float(report.w_sq[0].mean())
    residual = lhs - w0_sq
    valid = report.mean_sq_error > floor * max(1.0, w0_sq)
    violations = valid & (residual > 3.0 * stderr + 1e-12 * max(1.0, w0_sq))
    return {"times": t, "residual": residual, "stderr": stderr,
            "violations": violations, "valid": valid}


def stopping_tau(report: SyncReport, R: float, beta: float) -> np.ndarray:
    """Per-path first time with C0 int ||u||_1^2 - (lambda_N/4 - L_g^2) t >= R + beta."""
    if R < 0 or beta < 0:
        raise ValueError("R and beta must be nonnegative")
    expr = (report.C0 * report.u_h1_int
            - (report.lambda_N / 4.0 - report.L_g ** 2) * report.times[:, None]
            - beta)
    hit = expr >= R
    out = np.full(report.n_paths, np.inf)
    for p in range(report.n_paths):
        idx = np.nonzero(hit[:, p])[0]
        if idx.size:
            out[p] = report.times[idx[0]]
    return out


def girsanov_shift(u: Field, v: Field, cfg: NudgingConfig,
                   spec: MultiplicativeNoiseSpec):
    """Shift vector lam * f(u) P_N(u - v) and its Euclidean (noise-space) norm."""
    if spec.M < cfg.N:
        raise ValueError("pseudo-inverse rank M must be >= observed modes N")
    w = Field(u.grid, project_eigen_coeffs(u.coeffs - v.coeffs,
                                           u.grid.n_points, cfg.N))
    vec = cfg.lam * f_apply(spec, u, w)
    return vec, float(np.linalg.norm(vec))


def suggested_K(R_star: float, m_star: int = 1) -> float:
    """Budget for the observation integral: R* plus the tail sum of n^{-2}."""
    tail = float(np.sum(1.0 / np.arange(m_star, 100000) ** 2))
    return R_star + tail


@dataclass
class NudgedStoppedReport:
    times: np.ndarray
    w_sq: np.ndarray                  # (nt, paths)
    obs_integral: np.ndarray          # int ||P_N(u - v)||^2, (nt, paths)
    sigma_K: np.ndarray               # per-path hit time (inf if never)
    sync_fraction: float
    shift_sq_integral: np.ndarray     # int ||shift||^2 per path


def run_nudged_stopped(u0: Field, v0: Field, cfg: NudgingConfig,
                       spec: MultiplicativeNoiseSpec, K: float, T: float,
                       dt: float, h=None, n_paths: int = 1, seed: int = 0,
                       sync_tol: float = 1e-2) -> NudgedStoppedReport:
    """Coupled run where the feedback switches off once int ||P_N(u-v)||^2 >= K.

    The fraction of paths whose final error ||u - v||(T) falls below
    sync_tol * max(||u0 - v0||, 1) is reported as the synchronized fraction.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    if spec.M < cfg.N:
        raise ValueError("pseudo-inverse rank M must be >= observed modes N")
    scfg = SolverConfig(dt, u0.grid.n_points, scheme="exp_euler")
    grid = u0.grid
    k = grid.wavenumbers
    cs = CoupledStepper(scfg, cfg, spec, h)
    sde = cs._sde
    cu = np.broadcast_to(u0.coeffs, (n_paths, grid.n_points)).copy()
    cv = np.broadcast_to(v0.coeffs, (n_paths, grid.n_points)).copy()
    rngs = [stream(seed, path=p) for p in range(n_paths)]

    n = max(int(round(T / dt)), 1)
    obs_acc = np.zeros(n_paths)
    shift_acc = np.zeros(n_paths)
    stopped = obs_acc >= K
    sigma = np.full(n_paths, np.inf)
    sigma[stopped] = 0.0
    times = [0.0]
    w_sq = [sobolev_norm_coeffs(cu - cv, k, 0.0) ** 2]
    obs_series = [obs_acc.copy()]
    nm = spec.n_modes
    from kdvb.spectral import dealias_coeffs

    for i in range(n):
        pw = project_eigen_coeffs(cu - cv, grid.n_points, cfg.N)
        obs_sq = sobolev_norm_coeffs(pw, k, 0.0) ** 2
        active = ~stopped
        # actual shift h = lam f(u) P_N(u - v), batched across paths
        sig = spec.sigma(sobolev_norm_coeffs(cu, k, 0.0))
        fvec = spec.basis.vector_from_field(pw, spec.M) / sig[:, :spec.M]
        shift_acc = shift_acc + dt * active * (cfg.lam ** 2
                                               * np.sum(fvec ** 2, axis=-1))
        dW = np.sqrt(dt) * np.stack([r.standard_normal(nm) for r in rngs])
        cu = sde.step(cu, i * dt, None, dW=dW)
        drift = sde.drift(cv, i * dt) + (cfg.lam * active[:, None]) * pw
        inc = sde.noise_increment(cv, None, dW=dW)
        out = sde._stepper._E_full * (cv + dt * drift + inc)
        if scfg.dealias_on:
            out = dealias_coeffs(out, grid.dealias_mask)
        cv = sde._stepper._guard(out)
        obs_acc = obs_acc + dt * obs_sq * active
        newly = active & (obs_acc >= K)
        sigma[newly] = (i + 1) * dt
        stopped = stopped | newly
        times.append((i + 1) * dt)
        w_sq.append(sobolev_norm_coeffs(cu - cv, k, 0.0) ** 2)
        obs_series.append(obs_acc.copy())

    w_sq = np.array(w_sq)
    w0 = np.sqrt(float(w_sq[0].mean()))
    final = np.sqrt(w_sq[-1])
    frac = float(np.mean(final < sync_tol * max(w0, 1.0)))
    return NudgedStoppedReport(np.array(times), w_sq, np.array(obs_series),
                               sigma, frac, shift_acc)
