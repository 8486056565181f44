"""Time integration for the KdV-Burgers equation and its linearizations.

The stiff linear symbol -i k^3 + k^2 + 1 is integrated exactly in Fourier
space; only the quadratic term and the forcing are stepped.  Two schemes:

* ``strang``: half semigroup / midpoint RK2 on the non-stiff part / half
  semigroup.  Second order, used for deterministic runs.
* ``exp_euler``: exponential Euler, u <- e^{-A dt}(u + dt * N(u)).  First
  order; the stochastic integrator builds on it.

All steppers operate on coefficient arrays of shape (..., n) so ensembles
propagate in one batched FFT call.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from kdvb.spectral import (
    Field,
    TorusGrid,
    dealias_coeffs,
    deriv_coeffs,
    l2_inner_coeffs,
    reflect_coeffs,
    sobolev_norm_coeffs,
    to_coeffs,
    to_values,
)


class BlowUpError(RuntimeError):
    """Raised when the solution norm exceeds the configured guard."""


@dataclass
class SolverConfig:
    dt: float
    n_points: int
    dealias_on: bool = True
    scheme: str = "strang"
    blowup_threshold: float = 1e6

    def __post_init__(self):
        if not 0 < self.dt <= 0.1:
            raise ValueError("dt must satisfy 0 < dt <= 0.1")
        if self.scheme not in ("strang", "exp_euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.n_points)


@dataclass
class Trajectory:
    """States sampled along one run; coefficient array indexed (time, ..., mode)."""

    grid: TorusGrid
    times: np.ndarray
    coeffs: np.ndarray
    functionals: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.coeffs.shape[0] != self.times.shape[0]:
            raise ValueError("times and states misaligned")

    def field(self, i: int) -> Field:
        return Field(self.grid, self.coeffs[i])

    def at_time(self, t: float) -> np.ndarray:
        """Coefficients at time t by linear interpolation between stored states."""
        ts = self.times
        if t <= ts[0]:
            return self.coeffs[0]
        if t >= ts[-1]:
            return self.coeffs[-1]
        i = int(np.searchsorted(ts, t)) - 1
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        return (1 - w) * self.coeffs[i] + w * self.coeffs[i + 1]

    def norms(self, s: float = 0.0) -> np.ndarray:
        return sobolev_norm_coeffs(self.coeffs, self.grid.wavenumbers, s)


# ---------------------------------------------------------------------------
# coefficient-level machinery

def nonlinearity_coeffs(c: np.ndarray, grid: TorusGrid, dealias: bool = True) -> np.ndarray:
    """Coefficients of B(u) = u u_x, pseudo-spectral with 2/3-rule truncation."""
    k = grid.wavenumbers
    u = to_values(c)
    ux = to_values(deriv_coeffs(c, k, 1))
    out = to_coeffs(u * ux)
    if dealias:
        out = dealias_coeffs(out, grid.dealias_mask)
    return out


def coeff_fn(obj, grid: TorusGrid) -> Callable[[float], np.ndarray] | None:
    """Coerce a forcing (None | Field | array | callable t->any of those)."""
    if obj is None:
        return None
    if callable(obj) and not isinstance(obj, Field):
        def fn(t: float):
            v = obj(t)
            if v is None:
                return None
            if isinstance(v, Field):
                return v.coeffs
            return np.asarray(v)
        return fn
    if isinstance(obj, Field):
        c = obj.coeffs
    else:
        c = np.asarray(obj, dtype=complex)
    return lambda t: c


class Stepper:
    """Precomputed exponential stepping for d/dt c = -symbol * c + N(c, t)."""

    def __init__(self, cfg: SolverConfig, symbol: np.ndarray | None = None):
        self.cfg = cfg
        self.grid = cfg.grid
        if symbol is None:
            symbol = self.grid.a_symbol
        self.symbol = symbol
        self._E_half = np.exp(-symbol * (cfg.dt / 2))
        self._E_full = np.exp(-symbol * cfg.dt)

    def _guard(self, c: np.ndarray) -> np.ndarray:
        norms = sobolev_norm_coeffs(c, self.grid.wavenumbers, 0.0)
        if np.any(norms > self.cfg.blowup_threshold) or not np.all(np.isfinite(norms)):
            raise BlowUpError(
                f"solution norm exceeded {self.cfg.blowup_threshold:g};"
                " check dt / forcing amplitude"
            )
        return c

    def strang(self, c: np.ndarray, t: float, nl) -> np.ndarray:
        dt = self.cfg.dt
        c1 = self._E_half * c
        tm = t + dt / 2
        k1 = nl(c1, tm)
        k2 = nl(c1 + 0.5 * dt * k1, tm)
        out = self._E_half * (c1 + dt * k2)
        if self.cfg.dealias_on:
            out = dealias_coeffs(out, self.grid.dealias_mask)
        return self._guard(out)

    def exp_euler(self, c: np.ndarray, t: float, nl) -> np.ndarray:
        out = self._E_full * (c + self.cfg.dt * nl(c, t))
        if self.cfg.dealias_on:
            out = dealias_coeffs(out, self.grid.dealias_mask)
        return self._guard(out)

    def step(self, c: np.ndarray, t: float, nl) -> np.ndarray:
        if self.cfg.scheme == "strang":
            return self.strang(c, t, nl)
        return self.exp_euler(c, t, nl)

    def semigroup_only(self, c: np.ndarray) -> np.ndarray:
        return self._guard(self._E_full * c)


def _kdvb_rhs(grid: TorusGrid, dealias: bool, f_fn):
    def nl(c, t):
        out = -nonlinearity_coeffs(c, grid, dealias)
        if f_fn is not None:
            fc = f_fn(t)
            if fc is not None:
                out = out + fc
        return out
    return nl


def _n_steps(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        n = int(np.ceil(T / dt - 1e-12))
    return max(n, 1)


# ---------------------------------------------------------------------------
# public operations

def nonlinearity_B(u: Field, dealias: bool = True) -> Field:
    return Field(u.grid, nonlinearity_coeffs(u.coeffs, u.grid, dealias))


def step(u: Field, forcing, cfg: SolverConfig, t: float = 0.0) -> Field:
    """One time step of u' = -Au - B(u) + forcing."""
    stepper = Stepper(cfg)
    nl = _kdvb_rhs(cfg.grid, cfg.dealias_on, coeff_fn(forcing, cfg.grid))
    return Field(u.grid, stepper.step(u.coeffs, t, nl))


def solve_S(u0: Field, forcing, T: float, cfg: SolverConfig) -> Field:
    """Kick-to-kick solution map S(u0, f) = u(T)."""
    if T <= 0:
        raise ValueError("T must be positive")
    n = _n_steps(T, cfg.dt)
    cfg_run = SolverConfig(T / n, cfg.n_points, cfg.dealias_on, cfg.scheme,
                           cfg.blowup_threshold)
    stepper = Stepper(cfg_run)
    nl = _kdvb_rhs(cfg.grid, cfg.dealias_on, coeff_fn(forcing, cfg.grid))
    c = u0.coeffs
    for i in range(n):
        c = stepper.step(c, i * cfg_run.dt, nl)
    return Field(u0.grid, c)


def solve_trajectory(u0: Field, forcing, T: float, cfg: SolverConfig,
                     save_every: int = 1) -> Trajectory:
    """Like solve_S but records the path (and the ||u||, ||u||_1 series)."""
    n = _n_steps(T, cfg.dt)
    cfg_run = SolverConfig(T / n, cfg.n_points, cfg.dealias_on, cfg.scheme,
                           cfg.blowup_threshold)
    stepper = Stepper(cfg_run)
    nl = _kdvb_rhs(cfg.grid, cfg.dealias_on, coeff_fn(forcing, cfg.grid))
    c = u0.coeffs
    times = [0.0]
    states = [c]
    for i in range(n):
        c = stepper.step(c, i * cfg_run.dt, nl)
        if (i + 1) % save_every == 0 or i == n - 1:
            times.append((i + 1) * cfg_run.dt)
            states.append(c)
    traj = Trajectory(u0.grid, np.array(times), np.array(states))
    k = u0.grid.wavenumbers
    traj.functionals["l2_sq"] = sobolev_norm_coeffs(traj.coeffs, k, 0.0) ** 2
    traj.functionals["h1_sq"] = sobolev_norm_coeffs(traj.coeffs, k, 1.0) ** 2
    return traj


def linearized_rhs(grid: TorusGrid, dealias: bool, ubar_fn, source_fn):
    """RHS of w' = -Aw - (ubar w)_x + source with frozen coefficient ubar(t)."""
    k = grid.wavenumbers

    def nl(c, t):
        ub = ubar_fn(t)
        prod = to_coeffs(to_values(ub) * to_values(c))
        if dealias:
            prod = dealias_coeffs(prod, grid.dealias_mask)
        out = -deriv_coeffs(prod, k, 1)
        if source_fn is not None:
            s = source_fn(t)
            if s is not None:
                out = out + s
        return out
    return nl


def step_linearized(w: Field, ubar: Field, source, cfg: SolverConfig,
                    t: float = 0.0) -> Field:
    """One step of w' + Aw + (ubar w)_x = source around the frozen state ubar."""
    stepper = Stepper(cfg)
    nl = linearized_rhs(cfg.grid, cfg.dealias_on, coeff_fn(ubar, cfg.grid),
                        coeff_fn(source, cfg.grid))
    return Field(w.grid, stepper.step(w.coeffs, t, nl))


def solve_linearized(w0: Field, ubar, source, T: float, cfg: SolverConfig,
                     save_every: int | None = None) -> Field | Trajectory:
    """Propagate the linearization over [0, T]; ubar may be a Trajectory."""
    n = _n_steps(T, cfg.dt)
    cfg_run = SolverConfig(T / n, cfg.n_points, cfg.dealias_on, cfg.scheme,
                           cfg.blowup_threshold)
    if isinstance(ubar, Trajectory):
        ubar_fn = ubar.at_time
    else:
        ubar_fn = coeff_fn(ubar, cfg.grid) or (lambda t: np.zeros(cfg.n_points))
    stepper = Stepper(cfg_run)
    nl = linearized_rhs(cfg.grid, cfg.dealias_on, ubar_fn, coeff_fn(source, cfg.grid))
    c = w0.coeffs
    times, states = [0.0], [c]
    for i in range(n):
        c = stepper.step(c, i * cfg_run.dt, nl)
        if save_every and ((i + 1) % save_every == 0 or i == n - 1):
            times.append((i + 1) * cfg_run.dt)
            states.append(c)
    if save_every:
        return Trajectory(w0.grid, np.array(times), np.array(states))
    return Field(w0.grid, c)


def solve_adjoint(vT: Field, a, b, g, T: float, cfg: SolverConfig,
                  save_every: int = 1) -> Trajectory:
    """Solve -v_t - v_xxx - v_xx + a v_x + b v = g backward from v(T) = vT.

    Implemented through the reflection y(x, t) = v(2pi - x, T - t), which
    turns the backward problem into the forward dissipative system

        y_t + y_xxx - y_xx - a~ y_x + b~ y = g~,

    with a~(x,t) = a(2pi-x, T-t) and likewise for b~, g~.  The linear part
    y_xxx - y_xx is integrated exactly (symbol -i k^3 + k^2).
    """
    grid = cfg.grid
    k = grid.wavenumbers
    n = _n_steps(T, cfg.dt)
    cfg_run = SolverConfig(T / n, cfg.n_points, cfg.dealias_on, cfg.scheme,
                           cfg.blowup_threshold)

    def reflected(obj):
        if obj is None:
            return None
        if isinstance(obj, Trajectory):
            return lambda t: reflect_coeffs(obj.at_time(T - t))
        fn = coeff_fn(obj, grid)
        return lambda t: reflect_coeffs(fn(T - t))

    a_fn, b_fn, g_fn = reflected(a), reflected(b), reflected(g)
    symbol = grid.a_symbol - 1.0   # y_xxx - y_xx
    stepper = Stepper(cfg_run, symbol=symbol)
    mask = grid.dealias_mask

    def nl(c, t):
        out = np.zeros_like(c)
        if a_fn is not None:
            av = to_values(a_fn(t))
            yx = to_values(deriv_coeffs(c, k, 1))
            out = out + to_coeffs(av * yx)
        if b_fn is not None:
            bv = to_values(b_fn(t))
            out = out - to_coeffs(bv * to_values(c))
        if cfg.dealias_on:
            out = dealias_coeffs(out, mask)
        if g_fn is not None:
            gc = g_fn(t)
            if gc is not None:
                out = out + gc
        return out

    c = reflect_coeffs(vT.coeffs)
    y_times, y_states = [0.0], [c]
    for i in range(n):
        c = stepper.step(c, i * cfg_run.dt, nl)
        if (i + 1) % save_every == 0 or i == n - 1:
            y_times.append((i + 1) * cfg_run.dt)
            y_states.append(c)
    # map back: v(t) = reflect(y(T - t))
    v_times = T - np.array(y_times)[::-1]
    v_states = reflect_coeffs(np.array(y_states)[::-1])
    v_times[0] = max(v_times[0], 0.0)
    return Trajectory(vT.grid, v_times, v_states)


def energy_report(traj: Trajectory, forcing=None) -> np.ndarray:
    """Per-step residual of (1/2) d/dt ||u||^2 + ||u||_1^2 = (f, u)."""
    grid = traj.grid
    k = grid.wavenumbers
    f_fn = coeff_fn(forcing, grid)
    c = traj.coeffs
    t = traj.times
    dt = np.diff(t)
    l2 = sobolev_norm_coeffs(c, k, 0.0) ** 2
    mid = 0.5 * (c[1:] + c[:-1])
    h1_mid = sobolev_norm_coeffs(mid, k, 1.0) ** 2
    res = (l2[1:] - l2[:-1]) / (2 * dt) + h1_mid
    if f_fn is not None:
        for i in range(len(dt)):
            fc = f_fn(0.5 * (t[i] + t[i + 1]))
            if fc is not None:
                res[i] -= l2_inner_coeffs(fc, mid[i])
    return res
