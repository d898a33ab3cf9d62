"""Accelerator hardware envelope and the analytical latency cost model.

The compute fabric is a row of ``pn`` processing elements, each holding
``pm`` MAC units fed from a packed memory bus; matrices are staged on chip
in ``tn`` x ``tm`` tiles. Matmul latency follows

    cycles = tn * tm * k * tiles_row * tiles_col * kernel_factor / (pn * pm)

with ``kernel_factor = ceil(heads / kernels)`` for head-grouped matmuls and
``1 / kernels`` otherwise. Non-matmul nodes are charged elementwise through
the non-linear units: ``ceil(elems / (lop * kernels))`` cycles. Tiling pads:
partial tiles cost the same as full ones, so ceiling tile counts are used.

Scalar entry points evaluate in exact integer/rational arithmetic; the
design-space search uses the vectorized float kernels in ``_latency``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional

from .errors import InfeasibleTilesError, SchemaError
from .model_ir import Dag, OpKind

HW_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class HardwareSpec:
    """Accelerator envelope: bus, on-chip staging, memory banks, kernels."""

    name: str
    axi_width_bits: int
    data_width_bits: int
    onchip_capacity_elems: int
    ddr_banks: int
    num_kernels: int
    frequency_hz: float
    lop: int
    resource_budget: Optional[dict[str, int]] = None

    def __post_init__(self):
        for fname in ("axi_width_bits", "data_width_bits", "onchip_capacity_elems",
                      "ddr_banks", "num_kernels", "lop"):
            value = getattr(self, fname)
            if not isinstance(value, int) or value < 1:
                raise SchemaError(f"{fname} must be a positive integer, got {value!r}")
        if self.frequency_hz <= 0:
            raise SchemaError(f"frequency_hz must be positive, got {self.frequency_hz!r}")
        if self.axi_width_bits < 2 * self.data_width_bits:
            raise SchemaError(
                f"axi_width_bits {self.axi_width_bits} < 2 * data_width_bits "
                f"{self.data_width_bits}"
            )

    @property
    def pack_factor(self) -> int:
        """Elements packed per bus word."""
        return compute_pm(self.axi_width_bits, self.data_width_bits)


@dataclass(frozen=True)
class TileParams:
    """One searched configuration: PE count, MACs per PE, and tile shape."""

    pn: int
    pm: int
    tn: int
    tm: int

    def astuple(self) -> tuple[int, int, int, int]:
        return (self.pn, self.pm, self.tn, self.tm)

    @property
    def parallelism(self) -> int:
        return self.pn * self.pm


@dataclass(frozen=True)
class FeasibilityVerdict:
    ok: bool
    violations: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class CostBreakdown:
    total_ops: int
    ops_per_tile: int
    num_tiles_row: int
    num_tiles_col: int
    kernel_factor: Fraction
    adjusted_cycles: Fraction
    latency_s: float


def compute_pm(axi_width_bits: int, data_width_bits: int) -> int:
    """MAC units per PE, fixed by the bus word: floor(AXI / (2 * DW))."""
    if axi_width_bits < 2 * data_width_bits:
        raise SchemaError(
            f"axi_width_bits {axi_width_bits} < 2 * data_width_bits {data_width_bits}"
        )
    return axi_width_bits // (2 * data_width_bits)


def kernel_factor(num_heads: int, num_kernels: int, head_flag: bool) -> Fraction:
    """Cycle multiplier for spreading work across kernels.

    Head-grouped matmuls serialize head batches over the kernels; everything
    else splits rows evenly across them.
    """
    if num_heads < 1 or num_kernels < 1:
        raise SchemaError("num_heads and num_kernels must be >= 1")
    if head_flag:
        return Fraction(math.ceil(num_heads / num_kernels))
    return Fraction(1, num_kernels)


def validate_tiles(tiles: TileParams, hw: HardwareSpec) -> FeasibilityVerdict:
    """Check a tile configuration against the hardware envelope."""
    violations = []
    if min(tiles.pn, tiles.pm, tiles.tn, tiles.tm) < 1:
        violations.append("all tile parameters must be >= 1")
        return FeasibilityVerdict(False, tuple(violations))
    expected_pm = compute_pm(hw.axi_width_bits, hw.data_width_bits)
    if tiles.pm != expected_pm:
        violations.append(f"pm {tiles.pm} != floor(AXI/(2*DW)) = {expected_pm}")
    if tiles.tm % tiles.pm != 0:
        violations.append(f"tm {tiles.tm} not a multiple of pm {tiles.pm}")
    if not tiles.pn * tiles.pm < tiles.tm:
        violations.append(f"pn {tiles.pn} not < tm/pm = {tiles.tm}/{tiles.pm}")
    if tiles.tn * tiles.tm > hw.onchip_capacity_elems:
        violations.append(
            f"tn*tm = {tiles.tn * tiles.tm} exceeds on-chip capacity "
            f"{hw.onchip_capacity_elems}"
        )
    return FeasibilityVerdict(not violations, tuple(violations))


def matmul_cost(dims: tuple[int, int, int], tiles: TileParams, hw: HardwareSpec,
                head_flag: bool = False, num_heads: int = 1) -> CostBreakdown:
    """Latency of one tiled matmul under a configuration, exact arithmetic.

    Checks the constraints the arithmetic depends on (capacity, packing,
    positivity); the PE-count pipelining bound pn < tm/pm is enforced where
    configurations get selected (validate_tiles, the search space), so pure
    cost queries on out-of-bound points still evaluate.
    """
    violations = []
    if min(tiles.pn, tiles.pm, tiles.tn, tiles.tm) < 1:
        violations.append("all tile parameters must be >= 1")
    else:
        expected_pm = compute_pm(hw.axi_width_bits, hw.data_width_bits)
        if tiles.pm != expected_pm:
            violations.append(f"pm {tiles.pm} != floor(AXI/(2*DW)) = {expected_pm}")
        if tiles.tm % tiles.pm != 0:
            violations.append(f"tm {tiles.tm} not a multiple of pm {tiles.pm}")
        if tiles.tn * tiles.tm > hw.onchip_capacity_elems:
            violations.append(
                f"tn*tm = {tiles.tn * tiles.tm} exceeds on-chip capacity "
                f"{hw.onchip_capacity_elems}"
            )
    if violations:
        raise InfeasibleTilesError(violations)
    n, k, m = dims
    if min(n, k, m) < 1:
        raise SchemaError(f"matmul dims must be positive, got {dims}")
    num_tiles_row = -(-n // tiles.tn)
    num_tiles_col = -(-m // tiles.tm)
    ops_per_tile = tiles.tn * tiles.tm * k
    total_ops = ops_per_tile * num_tiles_row * num_tiles_col
    kf = kernel_factor(num_heads, hw.num_kernels, head_flag)
    adjusted_cycles = Fraction(total_ops, tiles.pn * tiles.pm) * kf
    latency_s = float(adjusted_cycles / Fraction(hw.frequency_hz))
    return CostBreakdown(
        total_ops=total_ops,
        ops_per_tile=ops_per_tile,
        num_tiles_row=num_tiles_row,
        num_tiles_col=num_tiles_col,
        kernel_factor=kf,
        adjusted_cycles=adjusted_cycles,
        latency_s=latency_s,
    )


def nonlinear_cycles(elems: int, hw: HardwareSpec) -> int:
    """Cycles for an elementwise/non-linear node: lop lanes per kernel."""
    return -(-elems // (hw.lop * hw.num_kernels))


@dataclass(frozen=True)
class GraphCost:
    feasible: bool
    violations: tuple[str, ...]
    total_latency_s: float
    matmul_latency_s: float
    nonlinear_latency_s: float
    per_node: tuple[tuple[str, float], ...]


def graph_latency(dag: Dag, tiles: TileParams, hw: HardwareSpec) -> GraphCost:
    """Total modeled latency of a DAG under one tile configuration.

    Infeasible configurations yield a tagged result (``feasible=False``)
    rather than an exception so search loops can prune cheaply.
    """
    verdict = validate_tiles(tiles, hw)
    if not verdict:
        return GraphCost(False, verdict.violations, math.inf, math.inf, math.inf, ())
    freq = Fraction(hw.frequency_hz)
    per_node = []
    mm_cycles = Fraction(0)
    nl_cycles = 0
    for node in dag.nodes:
        if node.kind is OpKind.MATMUL:
            cost = matmul_cost(node.dims, tiles, hw, node.head_scoped, node.heads)
            mm_cycles += cost.adjusted_cycles
            per_node.append((node.id, cost.latency_s))
        else:
            cycles = nonlinear_cycles(node.work_elems, hw)
            nl_cycles += cycles
            per_node.append((node.id, float(Fraction(cycles) / freq)))
    return GraphCost(
        feasible=True,
        violations=(),
        total_latency_s=float((mm_cycles + nl_cycles) / freq),
        matmul_latency_s=float(mm_cycles / freq),
        nonlinear_latency_s=float(Fraction(nl_cycles) / freq),
        per_node=tuple(per_node),
    )


def parse_hardware(doc: Mapping) -> HardwareSpec:
    """Validate a hardware-description document (parsed JSON)."""
    if not isinstance(doc, Mapping):
        raise SchemaError("hardware document must be a JSON object")
    if doc.get("schema_version") != HW_SCHEMA_VERSION:
        raise SchemaError(
            f"hardware document schema_version must be {HW_SCHEMA_VERSION}, "
            f"got {doc.get('schema_version')!r}"
        )
    required = ("name", "axi_width_bits", "data_width_bits", "onchip_capacity_elems",
                "ddr_banks", "num_kernels", "frequency_hz", "lop")
    missing = [f for f in required if f not in doc]
    if missing:
        raise SchemaError(f"hardware document missing fields: {missing}")
    kwargs = {f: doc[f] for f in required}
    kwargs["frequency_hz"] = float(kwargs["frequency_hz"])
    if "resource_budget" in doc and doc["resource_budget"] is not None:
        kwargs["resource_budget"] = dict(doc["resource_budget"])
    return HardwareSpec(**kwargs)


def load_hardware(path) -> HardwareSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_hardware(json.load(fh))
