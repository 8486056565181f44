"""Numerical laboratory for the stochastic KdV-Burgers equation on the torus.

The equation under study is

    u_t + u_xxx - u_xx + u + u u_x = h + eta        on T = R/2piZ,

driven either by space-time localised kick noise or by multiplicative
Wiener forcing.  The package provides the spectral solver, both noise
models, nudging/synchronization experiments, Carleman-weighted
observability checks, the quadratic control problem behind the squeezing
estimate, and Markov-chain mixing diagnostics.
"""

from kdvb.spectral import TorusGrid, Field, EigenBasis
from kdvb.dynamics import SolverConfig, Trajectory, BlowUpError

__all__ = [
    "TorusGrid",
    "Field",
    "EigenBasis",
    "SolverConfig",
    "Trajectory",
    "BlowUpError",
]

__version__ = "0.1.0"
