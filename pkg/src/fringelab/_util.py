"""Small numeric helpers shared across modules."""

from __future__ import annotations

import numpy as np


def moving_average(values, width: int, valid=None) -> np.ndarray:
    """Centered moving average with truncated edges.

    Windows are shortened near the array ends instead of padding. When a
    validity mask is given, invalid entries neither contribute to nor
    receive averaging; they pass through unchanged.

    Parameters
    ----------
    values : array_like, shape (n,)
    width : int
        Window length in samples. Even widths extend one sample further
        toward later indices.
    valid : array_like of bool, optional

    Returns
    -------
    ndarray of float, shape (n,)
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1:
        raise ValueError("values must be one dimensional")
    w = int(width)
    if w < 1:
        raise ValueError(f"width must be >= 1, got {width}")
    n = x.size
    if n == 0:
        return x.copy()
    if valid is None:
        m = np.ones(n, dtype=bool)
    else:
        m = np.asarray(valid, dtype=bool)
        if m.shape != x.shape:
            raise ValueError("valid mask must match values in shape")

    half_lo = (w - 1) // 2
    half_hi = w // 2
    csum = np.cumsum(np.where(m, x, 0.0))
    ccnt = np.cumsum(m.astype(np.int64))
    idx = np.arange(n)
    lo = np.maximum(idx - half_lo, 0)
    hi = np.minimum(idx + half_hi, n - 1)
    tot = csum[hi] - np.where(lo > 0, csum[lo - 1], 0.0)
    cnt = ccnt[hi] - np.where(lo > 0, ccnt[lo - 1], 0)

    out = x.copy()
    out[m] = tot[m] / cnt[m]
    return out
