"""Batch latency evaluation kernels for the design-space search.

The search evaluates the cost model over thousands of candidate tile
configurations; this module provides that inner loop two ways:

* a numba ``@njit`` loop kernel (default when numba is importable), and
* a vectorized pure-numpy fallback.

Set ``VITMAP_NO_NUMBA=1`` to force the numpy path. Both paths perform the
same float64 operations in the same order, so results are bit-identical;
``benchmarks/bench_kernels.py`` compares their throughput.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .hw import HardwareSpec, kernel_factor, nonlinear_cycles
from .model_ir import Dag, OpKind

_NUMBA_ENV_OFF = os.environ.get("VITMAP_NO_NUMBA", "") == "1"

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via VITMAP_NO_NUMBA instead
    njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _NUMBA_ENV_OFF


def active_impl() -> str:
    return "numba" if USE_NUMBA else "numpy"


def _latency_batch_loops(tn, tm, pn, mm_n, mm_k, mm_m, mm_kf, pm, nl_cycles, inv_freq, out):
    npoints = tn.shape[0]
    nmm = mm_n.shape[0]
    for p in range(npoints):
        cycles = nl_cycles
        for j in range(nmm):
            ntr = (mm_n[j] + tn[p] - 1) // tn[p]
            ntc = (mm_m[j] + tm[p] - 1) // tm[p]
            ops = tn[p] * tm[p] * mm_k[j] * ntr * ntc
            cycles += ops * mm_kf[j] / (pn[p] * pm)
        out[p] = cycles * inv_freq
    return out


if HAVE_NUMBA:
    _latency_batch_jit = njit(cache=True)(_latency_batch_loops)
else:
    _latency_batch_jit = None


def _latency_batch_numpy(tn, tm, pn, mm_n, mm_k, mm_m, mm_kf, pm, nl_cycles, inv_freq, out):
    out[:] = nl_cycles
    denom = pn * pm
    for j in range(mm_n.shape[0]):
        ntr = (mm_n[j] + tn - 1) // tn
        ntc = (mm_m[j] + tm - 1) // tm
        ops = tn * tm * mm_k[j] * ntr * ntc
        out += ops * mm_kf[j] / denom
    out *= inv_freq
    return out


@dataclass(frozen=True)
class DagCostArrays:
    """Per-matmul dimension arrays plus the tile-independent non-linear cost."""

    mm_n: np.ndarray
    mm_k: np.ndarray
    mm_m: np.ndarray
    mm_kf: np.ndarray
    nl_cycles: float
    inv_freq: float
    pm: int
    capacity: int


def extract_cost_arrays(dag: Dag, hw: HardwareSpec) -> DagCostArrays:
    mms = dag.matmuls()
    mm_n = np.array([n.dims[0] for n in mms], dtype=np.int64)
    mm_k = np.array([n.dims[1] for n in mms], dtype=np.int64)
    mm_m = np.array([n.dims[2] for n in mms], dtype=np.int64)
    mm_kf = np.array(
        [float(kernel_factor(n.heads, hw.num_kernels, n.head_scoped)) for n in mms],
        dtype=np.float64,
    )
    nl_cycles = sum(
        nonlinear_cycles(n.work_elems, hw) for n in dag.nodes if n.kind is not OpKind.MATMUL
    )
    return DagCostArrays(
        mm_n=mm_n, mm_k=mm_k, mm_m=mm_m, mm_kf=mm_kf,
        nl_cycles=float(nl_cycles), inv_freq=1.0 / hw.frequency_hz,
        pm=hw.pack_factor, capacity=hw.onchip_capacity_elems,
    )


def latency_batch(arrays: DagCostArrays, tn, tm, pn, impl: str | None = None) -> np.ndarray:
    """Latency (seconds) of the DAG for each candidate (tn, tm, pn) triple.

    Candidates must already satisfy the tile feasibility constraints.
    ``impl`` overrides the module default ("numba" or "numpy").
    """
    tn = np.ascontiguousarray(tn, dtype=np.int64)
    tm = np.ascontiguousarray(tm, dtype=np.int64)
    pn = np.ascontiguousarray(pn, dtype=np.int64)
    out = np.empty(tn.shape[0], dtype=np.float64)
    if impl is None:
        impl = active_impl()
    if impl == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba requested but not importable")
        fn = _latency_batch_jit
    elif impl == "numpy":
        fn = _latency_batch_numpy
    else:
        raise ValueError(f"unknown impl {impl!r}")
    return fn(tn, tm, pn, arrays.mm_n, arrays.mm_k, arrays.mm_m, arrays.mm_kf,
              arrays.pm, arrays.nl_cycles, arrays.inv_freq, out)


def feasible_mask(arrays: DagCostArrays, tn, tm, pn) -> np.ndarray:
    """Vectorized tile feasibility check (pm is fixed by the hardware)."""
    tn = np.asarray(tn, dtype=np.int64)
    tm = np.asarray(tm, dtype=np.int64)
    pn = np.asarray(pn, dtype=np.int64)
    pm = arrays.pm
    return (
        (tn >= 1) & (tm >= 1) & (pn >= 1)
        & (tm % pm == 0)
        & (pn * pm < tm)
        & (tn * tm <= arrays.capacity)
    )
