"""Counter-based random streams.

Every stochastic object in the lab draws from a Philox generator keyed by
(master seed, path index, kick index).  Substreams are statistically
independent and stable: enlarging an ensemble or appending kicks never
shifts the draws of existing (path, kick) pairs.
"""

from __future__ import annotations

import numpy as np

_MASK32 = (1 << 32) - 1
_MASK64 = (1 << 64) - 1


def stream(seed: int, path: int = 0, kick: int = 0) -> np.random.Generator:
    """Return the generator for substream (seed, path, kick)."""
    if path < 0 or kick < 0:
        raise ValueError("path and kick indices must be non-negative")
    if path > _MASK32 or kick > _MASK32:
        raise ValueError("path and kick indices must fit in 32 bits")
    key = np.array([seed & _MASK64, ((path & _MASK32) << 32) | (kick & _MASK32)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def raised_cosine(rng: np.random.Generator, size=None) -> np.ndarray:
    """Sample the raised-cosine density p(r) = (1 + cos(pi r)) / 2 on [-1, 1].

    Rejection from the uniform proposal on [-1, 1]; p has maximum 1 so the
    acceptance probability is exactly 1/2 per attempt.
    """
    n = int(np.prod(size)) if size is not None else 1
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 16)
        r = rng.uniform(-1.0, 1.0, size=m)
        y = rng.uniform(0.0, 1.0, size=m)
        acc = r[y <= 0.5 * (1.0 + np.cos(np.pi * r))]
        take = min(acc.size, n - filled)
        out[filled:filled + take] = acc[:take]
        filled += take
    if size is None:
        return out[0]
    return out.reshape(size)


def raised_cosine_cdf(r: np.ndarray) -> np.ndarray:
    """Closed-form CDF of the raised-cosine density (for distribution tests)."""
    r = np.clip(np.asarray(r, dtype=float), -1.0, 1.0)
    return 0.5 * (r + 1.0) + np.sin(np.pi * r) / (2.0 * np.pi)
