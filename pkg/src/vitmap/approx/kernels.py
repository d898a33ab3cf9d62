"""Approximate non-linear functions on fixed-point values.

All functions take and return fixed-point integers in the configuration's
format (softmax and the exponential return 15-fractional-bit integers, the
resolution of their internal datapath). Scalar inputs come back as scalars.
Use ``cfg.fmt.quantize`` / ``dequantize`` to cross the float boundary.
"""

from __future__ import annotations

import numpy as np

from ..errors import SchemaError
from . import _fixmath
from ._fixmath import EXP_FRAC
from .config import ApproxConfig


def _as_flat(x):
    """Flattened contiguous int64 array plus the original shape."""
    arr = np.ascontiguousarray(x, dtype=np.int64)
    return arr.reshape(-1), arr.shape, arr.ndim == 0


def isqrt_approx(x, cfg: ApproxConfig, impl=None):
    """1/sqrt(x) via the exponent split x = 2^e * (1+f) and the 2^(-f/2) table.

    Exact at powers of two with even exponent; elsewhere bounded by the
    table resolution (measured by the error harness).
    """
    flat, shape, scalar = _as_flat(x)
    if np.any(flat <= 0):
        raise SchemaError("isqrt_approx requires x > 0")
    out = _fixmath.isqrt_fixed(flat, cfg.isqrt_table, cfg.table_bits,
                               cfg.inv_sqrt2_q15, cfg.fmt.frac_bits,
                               cfg.fmt.max_int, impl=impl)
    return out[0] if scalar else out.reshape(shape)


def pade_exp(x, cfg: ApproxConfig, return_flag: bool = False, impl=None):
    """e^x for x <= 0 as 2^-k * pade22(v), with x = -k*ln2 + v.

    The power-of-two part is a shift; the [2/2] rational core only ever sees
    v in (-ln2, 0], where it is accurate and monotone. Inputs outside the
    configured domain saturate to its edge; ``return_flag`` reports that.
    Output has 15 fractional bits.
    """
    flat, shape, scalar = _as_flat(x)
    lo = cfg.exp_lo_fixed
    flag = (flat < lo) | (flat > 0)
    clamped = np.clip(flat, lo, 0)
    out = _fixmath.exp_fixed(clamped, cfg.log2e_q15, cfg.ln2_qf,
                             cfg.fmt.frac_bits, impl=impl)
    if scalar:
        return (out[0], bool(flag[0])) if return_flag else out[0]
    out = out.reshape(shape)
    if return_flag:
        return out, flag.reshape(shape)
    return out


def softmax_approx(row, cfg: ApproxConfig, impl=None):
    """Division-free softmax over the last axis.

    Subtracts the row max, applies the shifted rational exponential, and
    normalizes by a reciprocal built from the sum's leading-one position
    plus a table seed (optionally Newton-refined). Output rows are
    15-fractional-bit values summing to ~1.
    """
    arr = np.ascontiguousarray(row, dtype=np.int64)
    if arr.size == 0:
        raise SchemaError("softmax_approx requires a non-empty row")
    squeeze = arr.ndim == 1
    rows = np.atleast_2d(arr)
    out = _fixmath.softmax_fixed(rows, cfg.exp_lo_fixed, cfg.log2e_q15,
                                 cfg.ln2_qf, cfg.fmt.frac_bits,
                                 cfg.recip_table, cfg.recip_bits,
                                 cfg.recip_refine, cfg.renormalize, impl=impl)
    return out[0] if squeeze else out


def gelu_pwl(x, cfg: ApproxConfig, impl=None):
    """Piecewise-linear GELU: zero below the pieces, identity above them."""
    flat, shape, scalar = _as_flat(x)
    px, ps, pb = cfg.gelu_pieces
    out = _fixmath.gelu_fixed(flat, px, ps, pb, cfg.fmt.frac_bits,
                              cfg.fmt.min_int, cfg.fmt.max_int, impl=impl)
    return out[0] if scalar else out.reshape(shape)


def layernorm_approx(row, gamma, beta, cfg: ApproxConfig, impl=None):
    """Row normalization with the table-based inverse square root.

    Mean and variance are integer arithmetic; the scale is
    isqrt_approx(variance + eps); output is gamma * (x - mean) * scale + beta.
    """
    arr = np.ascontiguousarray(row, dtype=np.int64)
    squeeze = arr.ndim == 1
    rows = np.atleast_2d(arr)
    n = rows.shape[1]
    if n < 2:
        raise SchemaError("layernorm_approx requires rows of length >= 2")
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.int64), (n,)).copy()
    beta = np.broadcast_to(np.asarray(beta, dtype=np.int64), (n,)).copy()
    out = _fixmath.layernorm_fixed(rows, gamma, beta, cfg.ln_eps,
                                   cfg.fmt.frac_bits, cfg.isqrt_table,
                                   cfg.table_bits, cfg.inv_sqrt2_q15,
                                   cfg.fmt.min_int, cfg.fmt.max_int, impl=impl)
    return out[0] if squeeze else out


def softmax_out_to_float(out) -> np.ndarray:
    """Dequantize softmax/exponential outputs (15 fractional bits)."""
    return np.asarray(out, dtype=np.float64) / (1 << EXP_FRAC)
