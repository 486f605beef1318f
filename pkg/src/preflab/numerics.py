"""Stable scalar and row-wise kernels shared by every loss and policy evaluation.

All routines are overflow-safe for any finite float64 input and return finite
values (softplus saturates to 0 or to its argument instead of overflowing).
"""

from __future__ import annotations

import numpy as np

# Beyond this magnitude exp() under/overflows the interesting branch anyway.
_SOFTPLUS_CUTOFF = 40.0


def sigmoid(x):
    """Logistic function, split by sign so exp() never overflows."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def softplus(x):
    """log(1 + exp(x)) with linear and exp() tails past the cutoff."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    hi = x > _SOFTPLUS_CUTOFF
    lo = x < -_SOFTPLUS_CUTOFF
    mid = ~(hi | lo)
    out[hi] = x[hi]
    out[lo] = np.exp(x[lo])
    out[mid] = np.log1p(np.exp(x[mid]))
    return out if out.ndim else float(out)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted log-softmax along `axis`.

    The normalizer is max + log(sum(exp(z - max))); the sum includes the
    exp(0) = 1 term of the max entry, so every output is <= 0 exactly.
    """
    z = np.asarray(logits, dtype=np.float64)
    zmax = np.max(z, axis=axis, keepdims=True)
    lse = zmax + np.log(np.sum(np.exp(z - zmax), axis=axis, keepdims=True))
    return z - lse


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    zmax = np.max(z, axis=axis, keepdims=True)
    e = np.exp(z - zmax)
    return e / np.sum(e, axis=axis, keepdims=True)
