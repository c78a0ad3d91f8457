"""Independent reference computations used for verification.

Nothing here shares code with the fast paths it checks.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def bigint_matmul(qa, qb) -> np.ndarray:
    """Matrix product over arbitrary-precision Python integers (object array)."""
    # astype(object) from an integer array yields Python ints
    a = np.asarray(qa).astype(np.int64).astype(object)
    b = np.asarray(qb).astype(np.int64).astype(object)
    return a.dot(b)


def first_mismatch(got, want):
    """Index of the first differing entry, or None when equal."""
    got = np.asarray(got, dtype=object)
    want = np.asarray(want, dtype=object)
    if got.shape != want.shape:
        return ()
    diff = np.argwhere(got != want)
    return tuple(int(i) for i in diff[0]) if len(diff) else None


def exact_scaled_product(qa, ea: int, qb, eb: int) -> np.ndarray:
    """``(qa @ qb) * 2**(ea + eb)`` as an object array of Fractions."""
    acc = bigint_matmul(qa, qb)
    scale = Fraction(2) ** (int(ea) + int(eb))
    return np.vectorize(lambda v: Fraction(v) * scale, otypes=[object])(acc)
