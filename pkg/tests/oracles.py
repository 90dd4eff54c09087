"""Independent Monte Carlo references used by several test modules."""

import numpy as np


def canonical_crossings(fractions, boundaries, n, seed, drift=0.0, chunk=1_000_000):
    """Count first crossings of ``Z_k > c_k`` for Brownian increments at the given fractions.

    ``Z_k = B(t_k) / sqrt(t_k)`` with ``E[Z_k] = drift * sqrt(t_k)``, which has
    the canonical covariance ``sqrt(t_i / t_j)``. Returns per-look counts.
    """
    t = np.asarray(fractions, dtype=float)
    c = np.asarray(boundaries, dtype=float)
    dt = np.diff(np.concatenate([[0.0], t]))
    g = np.random.default_rng(seed)
    hits = np.zeros(len(t), dtype=np.int64)
    done = 0
    while done < n:
        m = min(chunk, n - done)
        b = np.cumsum(g.standard_normal((m, len(t))) * np.sqrt(dt) + drift * dt, axis=1)
        z = b / np.sqrt(t)
        above = z > c
        first = np.where(above.any(axis=1), above.argmax(axis=1), -1)
        hits += np.bincount(first[first >= 0], minlength=len(t))
        done += m
    return hits
