"""Order-canonical floating-point reductions.

Plain ``sum``/``mean`` over a list depend on the list order at the last ulp,
which would break two contracts: averaging k copies of one array must return
that array exactly, and reordering the inputs must not change any output bit.
Sorting the addends per position makes the reduction order canonical, and a
running mean leaves identical inputs untouched (every increment is exactly
zero).
"""

from __future__ import annotations

import numpy as np


def canonical_sum(stack: np.ndarray) -> np.ndarray:
    """Sum over axis 0 in a canonical (sorted) order."""
    s = np.sort(np.asarray(stack, dtype=np.float64), axis=0)
    out = s[0].copy()
    for i in range(1, s.shape[0]):
        out += s[i]
    return out


def canonical_mean(stack: np.ndarray) -> np.ndarray:
    """Running mean over axis 0 in a canonical order; exact on equal inputs."""
    s = np.sort(np.asarray(stack, dtype=np.float64), axis=0)
    mean = s[0].copy()
    for i in range(1, s.shape[0]):
        mean += (s[i] - mean) / (i + 1)
    return mean
