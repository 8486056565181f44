"""Fourier calculus on the 2pi-torus.

Real periodic functions are stored as full complex Fourier coefficient
arrays c_k (numpy FFT ordering, c_{-k} = conj(c_k)).  The continuum L^2
normalization is used throughout: the constant function 1 has norm
sqrt(2*pi), and

    ||f||_{H^s}^2 = 2*pi * sum_k (1 + k^2)^s |c_k|^2.

All coefficient-level helpers broadcast over leading axes, so an ensemble
of fields can be propagated as one (n_paths, n) array.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * np.pi


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TorusGrid:
    """Uniform collocation grid x_j = 2*pi*j/n on [0, 2*pi)."""

    n_points: int

    def __post_init__(self):
        n = self.n_points
        if n < 8 or n % 2 != 0:
            raise ValueError("n_points must be an even integer >= 8")
        if not _is_power_of_two(n):
            raise ValueError("n_points must be a power of two (FFT grids only)")

    @property
    def nodes(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n_points) / self.n_points

    @property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers in FFT order: 0, 1, ..., n/2-1, -n/2, ..., -1."""
        return _wavenumbers(self.n_points)

    @property
    def quad_weight(self) -> float:
        """Trapezoid weight; exact for trigonometric polynomials of degree < n/2."""
        return TWO_PI / self.n_points

    @property
    def dealias_mask(self) -> np.ndarray:
        return np.abs(self.wavenumbers) <= self.n_points // 3

    @property
    def a_symbol(self) -> np.ndarray:
        """Fourier symbol of A = d_xxx - d_xx + 1, i.e. a_k = -i k^3 + k^2 + 1."""
        k = self.wavenumbers.astype(float)
        return -1j * k**3 + k**2 + 1.0

    @property
    def max_eigen_index(self) -> int:
        """Largest usable index into the eigenbasis (Nyquist pair excluded)."""
        return self.n_points - 1


@lru_cache(maxsize=None)
def _wavenumbers(n: int) -> np.ndarray:
    k = np.fft.fftfreq(n, d=1.0 / n)
    k.flags.writeable = False
    return k


# ---------------------------------------------------------------------------
# coefficient-level operations (broadcast over leading axes)

def to_coeffs(values: np.ndarray) -> np.ndarray:
    return np.fft.fft(values, axis=-1) / values.shape[-1]


def to_values(coeffs: np.ndarray) -> np.ndarray:
    return np.fft.ifft(coeffs * coeffs.shape[-1], axis=-1).real


def deriv_coeffs(coeffs: np.ndarray, k: np.ndarray, order: int) -> np.ndarray:
    return coeffs * (1j * k) ** order


def semigroup_coeffs(coeffs: np.ndarray, a_symbol: np.ndarray, t: float) -> np.ndarray:
    return coeffs * np.exp(-a_symbol * t)


def sobolev_norm_coeffs(coeffs: np.ndarray, k: np.ndarray, s: float) -> np.ndarray:
    w = (1.0 + k.astype(float) ** 2) ** s
    return np.sqrt(TWO_PI * np.sum(w * np.abs(coeffs) ** 2, axis=-1))


def l2_inner_coeffs(c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
    """L^2(T) inner product of the real fields with coefficients c1, c2."""
    return TWO_PI * np.sum(c1 * np.conj(c2), axis=-1).real


def reflect_coeffs(coeffs: np.ndarray) -> np.ndarray:
    """Coefficients of x -> f(2*pi - x): r_k = c_{-k}."""
    return np.roll(coeffs[..., ::-1], 1, axis=-1)


def project_eigen_coeffs(coeffs: np.ndarray, n: int, N: int) -> np.ndarray:
    """Orthogonal projection P_N onto span{e_1, ..., e_N} of the eigenbasis."""
    if N < 1:
        raise ValueError("N must be >= 1")
    N = min(N, n - 1)
    out = np.zeros_like(coeffs)
    out[..., 0] = coeffs[..., 0].real
    j_full = (N - 1) // 2          # pairs cos(jx), sin(jx) fully retained
    if j_full >= 1:
        out[..., 1:j_full + 1] = coeffs[..., 1:j_full + 1]
        out[..., n - j_full:] = coeffs[..., n - j_full:]
    if N % 2 == 0:                 # cos(jx) retained without its sin partner
        j = N // 2
        c = 0.5 * (coeffs[..., j] + np.conj(coeffs[..., n - j]))
        out[..., j] = c.real
        out[..., n - j] = c.real
    return out


def dealias_coeffs(coeffs: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, coeffs, 0.0)


class EigenBasis:
    """Eigenpairs of -d_xx + 1 on the torus.

    Ordering (cos before sin inside each eigenvalue pair):
        e_1 = 1/sqrt(2*pi)                        lambda_1 = 1
        e_{2j} = cos(jx)/sqrt(pi)                 lambda = 1 + j^2
        e_{2j+1} = sin(jx)/sqrt(pi)               lambda = 1 + j^2
    """

    def __init__(self, grid: TorusGrid, n_modes: int | None = None):
        if n_modes is None:
            n_modes = grid.max_eigen_index
        if n_modes < 1 or n_modes > grid.max_eigen_index:
            raise ValueError(f"n_modes must be in [1, {grid.max_eigen_index}]")
        self.grid = grid
        self.n_modes = n_modes

    @staticmethod
    def eigenvalue(i: int) -> float:
        """lambda_i for the 1-based eigenbasis index i."""
        if i < 1:
            raise ValueError("eigenbasis indices are 1-based")
        j = i // 2
        return 1.0 + float(j * j)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([self.eigenvalue(i) for i in range(1, self.n_modes + 1)])

    def mode_values(self, i: int) -> np.ndarray:
        """e_i sampled on the grid nodes."""
        x = self.grid.nodes
        if i == 1:
            return np.full_like(x, 1.0 / np.sqrt(TWO_PI))
        j = i // 2
        if i % 2 == 0:
            return np.cos(j * x) / np.sqrt(np.pi)
        return np.sin(j * x) / np.sqrt(np.pi)

    def field_from_vector(self, w: np.ndarray) -> np.ndarray:
        """Coefficients of sum_i w_i e_i; w has shape (..., m) with m <= n_modes."""
        w = np.asarray(w, dtype=float)
        m = w.shape[-1]
        if m > self.n_modes:
            raise ValueError("vector longer than basis")
        n = self.grid.n_points
        out = np.zeros(w.shape[:-1] + (n,), dtype=complex)
        out[..., 0] = w[..., 0] / np.sqrt(TWO_PI)
        for i in range(2, m + 1):
            j = i // 2
            amp = w[..., i - 1] / np.sqrt(np.pi)
            if i % 2 == 0:      # cos(jx): c_j += a/2, c_-j += a/2
                out[..., j] += 0.5 * amp
                out[..., n - j] += 0.5 * amp
            else:               # sin(jx): c_j += -i b/2, c_-j += i b/2
                out[..., j] += -0.5j * amp
                out[..., n - j] += 0.5j * amp
        return out

    def vector_from_field(self, coeffs: np.ndarray, m: int | None = None) -> np.ndarray:
        """Coordinates (f, e_i) for i = 1..m."""
        if m is None:
            m = self.n_modes
        n = self.grid.n_points
        out = np.empty(coeffs.shape[:-1] + (m,), dtype=float)
        out[..., 0] = coeffs[..., 0].real * np.sqrt(TWO_PI)
        for i in range(2, m + 1):
            j = i // 2
            if i % 2 == 0:
                out[..., i - 1] = 2.0 * np.sqrt(np.pi) * coeffs[..., j].real
            else:
                out[..., i - 1] = -2.0 * np.sqrt(np.pi) * coeffs[..., j].imag
        return out


class Field:
    """A real function on the torus, held as conjugate-symmetric coefficients."""

    __slots__ = ("grid", "coeffs")

    def __init__(self, grid: TorusGrid, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim < 1 or coeffs.shape[-1] != grid.n_points:
            raise ValueError("coefficient array does not match the grid")
        self.grid = grid
        self.coeffs = coeffs

    # -- constructors ------------------------------------------------------
    @classmethod
    def zero(cls, grid: TorusGrid) -> "Field":
        return cls(grid, np.zeros(grid.n_points, dtype=complex))

    @classmethod
    def from_values(cls, grid: TorusGrid, values: np.ndarray) -> "Field":
        return cls(grid, to_coeffs(np.asarray(values, dtype=float)))

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> "Field":
        return cls.from_values(grid, fn(grid.nodes))

    # -- basic calculus ----------------------------------------------------
    @property
    def values(self) -> np.ndarray:
        return to_values(self.coeffs)

    def deriv(self, order: int = 1) -> "Field":
        if order < 1:
            raise ValueError("order must be a positive integer")
        return Field(self.grid, deriv_coeffs(self.coeffs, self.grid.wavenumbers, order))

    def apply_A(self) -> "Field":
        return Field(self.grid, self.coeffs * self.grid.a_symbol)

    def semigroup(self, t: float) -> "Field":
        """e^{-tA} f, the exact solution map of f_t + Af = 0."""
        if t < 0:
            raise ValueError("t must be >= 0")
        return Field(self.grid, semigroup_coeffs(self.coeffs, self.grid.a_symbol, t))

    def sobolev_norm(self, s: float = 0.0) -> float:
        return float(sobolev_norm_coeffs(self.coeffs, self.grid.wavenumbers, s))

    def project_PN(self, N: int) -> "Field":
        if N > self.grid.max_eigen_index:
            raise ValueError("N exceeds the representable eigenbasis")
        return Field(self.grid, project_eigen_coeffs(self.coeffs, self.grid.n_points, N))

    def dealias(self) -> "Field":
        return Field(self.grid, dealias_coeffs(self.coeffs, self.grid.dealias_mask))

    def reflect(self) -> "Field":
        return Field(self.grid, reflect_coeffs(self.coeffs))

    def inner(self, other: "Field") -> float:
        return float(l2_inner_coeffs(self.coeffs, other.coeffs))

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.coeffs)

    def copy(self) -> "Field":
        return Field(self.grid, self.coeffs.copy())
