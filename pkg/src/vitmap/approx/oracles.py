"""Exact double-precision references for the approximate datapaths.

These stay independent of the fixed-point implementations: every
approximation is validated only by comparison against this module.
"""

from __future__ import annotations

import math

import numpy as np

_erf = np.vectorize(math.erf, otypes=[np.float64])


def exact_isqrt(x):
    return 1.0 / np.sqrt(np.asarray(x, dtype=np.float64))


def exact_exp(x):
    return np.exp(np.asarray(x, dtype=np.float64))


def exact_softmax(row):
    row = np.asarray(row, dtype=np.float64)
    z = row - row.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def exact_gelu(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + _erf(x / math.sqrt(2.0)))


def exact_layernorm(row, gamma=1.0, beta=0.0, eps: float = 0.0):
    row = np.asarray(row, dtype=np.float64)
    mean = row.mean(axis=-1, keepdims=True)
    var = ((row - mean) ** 2).mean(axis=-1, keepdims=True)
    return gamma * (row - mean) / np.sqrt(var + eps) + beta
