"""Noise generators: space-time localised kicks and multiplicative Wiener forcing.

Two models drive the stochastic runs:

* Kick noise: at period T the equation receives a random space-time field
  eta_k(t, x) = sum_i b_i xi_ik chi(t, x) phi_i(t, x) supported in a
  rectangle Q = (x1, x2) x (t1, t2) strictly inside the torus x one period.
  The phi_i are Dirichlet eigenfunctions of -d_xx - d_tt + 1 on Q, chi is a
  smooth cutoff and the xi_ik are i.i.d. raised-cosine variables on [-1, 1].

* Multiplicative noise: du + [Au + B(u)]dt = h dt + g(u)dW with g diagonal
  in the eigenbasis of -d_xx + 1, sigma_j(u) = beta_j * s(||u||).  The shape
  s is one of three presets (bounded / sublinear / linear) with closed-form
  Hilbert-Schmidt and Lipschitz constants, and g(u) f(u) = P_M exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np

from kdvb.rng import raised_cosine
from kdvb.spectral import (
    EigenBasis,
    Field,
    TorusGrid,
    TWO_PI,
    dealias_coeffs,
    sobolev_norm_coeffs,
)
from kdvb.dynamics import SolverConfig, Stepper, coeff_fn, nonlinearity_coeffs


# ---------------------------------------------------------------------------
# kick noise

def bump(s: np.ndarray) -> np.ndarray:
    """Polynomial bump on [0, 1]: (4 s (1-s))^3, zero outside.

    Vanishes together with first and second derivatives at both edges, so the
    tensor-product cutoff extends by zero as a C^2 function.
    """
    s = np.asarray(s, dtype=float)
    inside = (s > 0) & (s < 1)
    core = np.where(inside, 4.0 * s * (1.0 - s), 0.0)
    return core ** 3


class QBasis:
    """Dirichlet eigenpairs of -d_xx - d_tt + 1 on Q = (x1,x2) x (t1,t2).

    phi_{mn}(x, t) = (2 / sqrt(Lx Lt)) sin(m pi (x-x1)/Lx) sin(n pi (t-t1)/Lt),
    alpha_{mn} = 1 + (m pi / Lx)^2 + (n pi / Lt)^2, sorted by increasing alpha
    with lexicographic (m, n) tie-break.
    """

    def __init__(self, x1, x2, t1, t2, n_modes):
        if not (x2 > x1 and t2 > t1 and n_modes >= 1):
            raise ValueError("degenerate rectangle or empty basis")
        self.x1, self.x2, self.t1, self.t2 = x1, x2, t1, t2
        self.Lx, self.Lt = x2 - x1, t2 - t1
        self.n_modes = n_modes
        side = int(np.ceil(np.sqrt(n_modes))) + 8
        pairs = []
        for m in range(1, side + 1):
            for n in range(1, side + 1):
                alpha = 1.0 + (m * np.pi / self.Lx) ** 2 + (n * np.pi / self.Lt) ** 2
                pairs.append((alpha, m, n))
        pairs.sort()
        self.pairs = pairs[:n_modes]
        self.alphas = np.array([p[0] for p in self.pairs])

    def phi(self, i: int, x: np.ndarray, t) -> np.ndarray:
        """phi_i evaluated at broadcastable (x, t); zero outside Q."""
        _, m, n = self.pairs[i]
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        sx = (x - self.x1) / self.Lx
        st = (t - self.t1) / self.Lt
        inside = (sx > 0) & (sx < 1) & (st > 0) & (st < 1)
        val = (2.0 / np.sqrt(self.Lx * self.Lt)
               * np.sin(m * np.pi * np.clip(sx, 0, 1))
               * np.sin(n * np.pi * np.clip(st, 0, 1)))
        return np.where(inside, val, 0.0)


@dataclass
class LocalisedNoiseSpec:
    """Kick-noise description: rectangle, cutoff, amplitudes, mode count."""

    x1: float
    x2: float
    t1: float
    t2: float
    period: float
    n_modes: int = 64
    b: np.ndarray | None = None
    b_scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.x1 < self.x2 < TWO_PI:
            raise ValueError("need 0 < x1 < x2 < 2*pi")
        if not 0 < self.t1 < self.t2 < self.period:
            raise ValueError("need 0 < t1 < t2 < period")
        if self.b is None:
            self.b = self.b_scale * self.qbasis.alphas ** -2.0
        else:
            self.b = np.asarray(self.b, dtype=float)
            if self.b.shape != (self.n_modes,):
                raise ValueError("b must have length n_modes")
            if np.any(self.b < 0):
                raise ValueError("b must be nonnegative")
            cap = self.b_scale * self.qbasis.alphas ** -2.0
            if np.any(self.b > cap * (1 + 1e-12)):
                raise ValueError("amplitudes must satisfy b_i <= c * alpha_i^-2")

    @cached_property
    def qbasis(self) -> QBasis:
        return QBasis(self.x1, self.x2, self.t1, self.t2, self.n_modes)

    def chi(self, x, t) -> np.ndarray:
        """Tensor-product cutoff, compactly supported in Q."""
        sx = (np.asarray(x, dtype=float) - self.x1) / (self.x2 - self.x1)
        st = (np.asarray(t, dtype=float) - self.t1) / (self.t2 - self.t1)
        return bump(sx) * bump(st)


@dataclass
class KickSample:
    """One kick: frozen coefficients xi plus the space-time field they define."""

    spec: LocalisedNoiseSpec
    xi: np.ndarray

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        if self.xi.shape != (self.spec.n_modes,):
            raise ValueError("xi must have length n_modes")
        if np.any(np.abs(self.xi) > 1):
            raise ValueError("kick coefficients must lie in [-1, 1]")

    def eta_xt(self, x, t) -> np.ndarray:
        """eta_k(t, x) at broadcastable points; zero outside Q."""
        spec = self.spec
        qb = spec.qbasis
        out = np.zeros(np.broadcast(np.asarray(x, float), np.asarray(t, float)).shape)
        weights = spec.b * self.xi
        for i in range(spec.n_modes):
            if weights[i] != 0.0:
                out = out + weights[i] * qb.phi(i, x, t)
        return out * spec.chi(x, t)

    def field(self, tau: float, grid: TorusGrid) -> Field:
        """eta_k(tau, .) sampled on the solver grid (zero for tau outside (t1, t2))."""
        if not self.spec.t1 < tau < self.spec.t2:
            return Field.zero(grid)
        return Field.from_values(grid, self.eta_xt(grid.nodes, tau))


def sample_kick(spec: LocalisedNoiseSpec, rng: np.random.Generator) -> KickSample:
    """Draw one kick; each xi_i is an independent raised-cosine variable."""
    return KickSample(spec, raised_cosine(rng, size=spec.n_modes))


def eval_eta(samples, period: float, t: float, grid: TorusGrid) -> Field:
    """The concatenated kick process eta(t, .) = eta_k((t - (k-1)T), .)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    k = int(np.floor(t / period))
    if k >= len(samples):
        return Field.zero(grid)
    return samples[k].field(t - k * period, grid)


# ---------------------------------------------------------------------------
# multiplicative noise

_MODES = ("bounded", "sublinear", "linear")


@dataclass
class MultiplicativeNoiseSpec:
    """Diagonal multiplicative noise g(u) e_j = sigma_j(u) e_j on the eigenbasis.

    sigma_j(u) = beta_j * s(||u||) with the shape s picked by ``mode``:
      bounded:   s(r) = 1
      sublinear: s(r) = (1 + min(r, r^rho)) / 2      (globally 1/2-Lipschitz)
      linear:    s(r) = 1 + (L / B) r                (B = sqrt(sum beta_j^2))
    """

    basis: EigenBasis
    mode: str = "bounded"
    beta0: float = 1.0
    n_modes: int | None = None
    M: int = 4
    rho: float = 0.5
    L: float = 0.1
    beta: np.ndarray = dc_field(default=None)

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        if self.n_modes is None:
            self.n_modes = self.basis.n_modes
        if self.n_modes > self.basis.n_modes:
            raise ValueError("more noise modes than basis modes")
        if self.beta is None:
            j = np.arange(1, self.n_modes + 1, dtype=float)
            self.beta = self.beta0 / j ** 2
        else:
            self.beta = np.asarray(self.beta, dtype=float)
        if not np.all(np.isfinite(self.beta)) or np.any(self.beta < 0):
            raise ValueError("beta must be finite and nonnegative")
        if not 1 <= self.M <= self.n_modes:
            raise ValueError("M must lie in [1, n_modes]")
        if np.min(self.beta[:self.M]) <= 0:
            raise ValueError("beta_j must be positive for j <= M")
        if self.mode == "sublinear" and not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.mode == "linear" and self.L <= 0:
            raise ValueError("L must be positive in linear mode")

    @cached_property
    def hs_base(self) -> float:
        """B = (sum beta_j^2)^{1/2}, the Hilbert-Schmidt norm at s = 1."""
        return float(np.sqrt(np.sum(self.beta ** 2)))

    def shape(self, r):
        r = np.asarray(r, dtype=float)
        if self.mode == "bounded":
            return np.ones_like(r)
        if self.mode == "sublinear":
            return 0.5 * (1.0 + np.minimum(r, r ** self.rho))
        return 1.0 + (self.L / self.hs_base) * r

    def sigma(self, r) -> np.ndarray:
        """sigma_j(u) for ||u|| = r; broadcasts to shape r.shape + (n_modes,)."""
        return np.asarray(self.shape(r))[..., None] * self.beta

    def hs_norm(self, r):
        """||g(u)||_HS as a function of r = ||u||."""
        return self.hs_base * self.shape(r)

    @cached_property
    def constants(self) -> dict:
        """Closed-form growth/Lipschitz constants for the chosen preset."""
        B = self.hs_base
        if self.mode == "bounded":
            return {"K1": B, "L_g": 0.0}
        if self.mode == "sublinear":
            return {"K2": B / 2, "L2": B / 2, "rho": self.rho, "L_g": B / 2}
        L3 = self.L
        return {"K3": B, "L3": L3, "L_g": L3,
                "contractive": bool(L3 < 1.0),
                "strictly_contractive": bool(L3 < 1.0 / np.sqrt(5.0))}


def g_apply(spec: MultiplicativeNoiseSpec, u: Field, w: np.ndarray) -> Field:
    """g(u) applied to the noise vector w: returns sum_j sigma_j(u) w_j e_j."""
    w = np.asarray(w, dtype=float)
    sig = spec.sigma(u.sobolev_norm(0.0))
    return Field(u.grid, spec.basis.field_from_vector(sig[:w.shape[-1]] * w))


def f_apply(spec: MultiplicativeNoiseSpec, u: Field, v: Field) -> np.ndarray:
    """Pseudo-inverse of g(u) on the first M modes: (v, e_j)/sigma_j(u)."""
    sig = spec.sigma(u.sobolev_norm(0.0))
    out = np.zeros(spec.n_modes)
    out[:spec.M] = spec.basis.vector_from_field(v.coeffs, spec.M) / sig[:spec.M]
    return out


# ---------------------------------------------------------------------------
# SDE stepping

class SdeStepper:
    """Exponential Euler-Maruyama for du + [Au + B(u)]dt = h dt + g(u)dW.

    Operates on coefficient arrays of shape (..., n); leading axes are
    independent paths sharing nothing but the spec.
    """

    def __init__(self, cfg: SolverConfig, spec: MultiplicativeNoiseSpec, h=None):
        self.cfg = cfg
        self.spec = spec
        self.grid = cfg.grid
        self._stepper = Stepper(cfg)
        self._h_fn = coeff_fn(h, self.grid)
        # rows of the mode-to-coefficient map, so g(u)dW is one matmul
        eye = np.eye(spec.n_modes)
        self._mode_rows = spec.basis.field_from_vector(eye)
        self._sqrt_dt = np.sqrt(cfg.dt)

    def noise_increment(self, c: np.ndarray, rng: np.random.Generator,
                        dW: np.ndarray | None = None) -> np.ndarray:
        """Coefficients of g(u) dW; dW may be supplied (for coupled systems)."""
        nm = self.spec.n_modes
        if dW is None:
            dW = self._sqrt_dt * rng.standard_normal(c.shape[:-1] + (nm,))
        r = sobolev_norm_coeffs(c, self.grid.wavenumbers, 0.0)
        sig = self.spec.sigma(r)
        return (sig * dW) @ self._mode_rows

    def drift(self, c: np.ndarray, t: float) -> np.ndarray:
        out = -nonlinearity_coeffs(c, self.grid, self.cfg.dealias_on)
        if self._h_fn is not None:
            hc = self._h_fn(t)
            if hc is not None:
                out = out + hc
        return out

    def step(self, c: np.ndarray, t: float, rng: np.random.Generator,
             dW: np.ndarray | None = None) -> np.ndarray:
        inc = self.noise_increment(c, rng, dW)
        out = self._stepper._E_full * (c + self.cfg.dt * self.drift(c, t) + inc)
        if self.cfg.dealias_on:
            out = dealias_coeffs(out, self.grid.dealias_mask)
        return self._stepper._guard(out)


def stochastic_step(u: Field, spec: MultiplicativeNoiseSpec, h, dt: float,
                    rng: np.random.Generator, t: float = 0.0) -> Field:
    """One exponential Euler-Maruyama step of the multiplicative-noise system."""
    cfg = SolverConfig(dt, u.grid.n_points, scheme="exp_euler")
    return Field(u.grid, SdeStepper(cfg, spec, h).step(u.coeffs, t, rng))
