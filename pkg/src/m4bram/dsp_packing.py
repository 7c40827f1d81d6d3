"""Packing several low-precision products onto one DSP multiplier.

Weights are packed into operand A at a field stride ``s`` and activations into
operand B at a stride ``m * s``, so the product ``W_i * I_j`` lands in its own
result field at offset ``(i + j*m) * s``.  Fields are extracted low-to-high
with borrow correction, which is what lets signed fields pack with zero guard
bits.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .precision import PrecisionError

EXHAUSTIVE_ENTROPY_BITS = 24
RANDOM_TRIALS = 1_000_000


@dataclass(frozen=True)
class DspModel:
    name: str
    op_a_bits: int
    op_b_bits: int
    result_bits: int
    multipliers_per_block: int = 1
    guard_bits: int = 0

    def __post_init__(self):
        if self.op_a_bits < 8 or self.op_b_bits < 8:
            raise ValueError("DSP operand ports must be at least 8 bits wide")
        if self.result_bits < self.op_a_bits + self.op_b_bits:
            raise ValueError("result port narrower than a full product")
        if self.guard_bits < 0 or self.multipliers_per_block < 1:
            raise ValueError("invalid guard bits or multiplier count")


INTEL = DspModel("intel", 18, 18, 37, multipliers_per_block=2)
XILINX = DspModel("xilinx", 25, 18, 48, multipliers_per_block=1)
PRESETS = {"intel": INTEL, "xilinx": XILINX}


@dataclass(frozen=True)
class Operands:
    """Operand widths for packing; unlike PrecisionConfig, any width is allowed."""

    weight_bits: int
    act_bits: int
    act_signed: bool = False
    weight_signed: bool = True


def _as_operands(p) -> Operands:
    if isinstance(p, Operands):
        return p
    return Operands(p.weight_bits, p.act_bits, getattr(p, "act_signed", False))


def _field_range(bits: int, signed: bool) -> tuple[int, int]:
    if signed:
        return -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    return 0, (1 << bits) - 1


def _packed_range(bits: int, signed: bool, count: int, stride: int) -> tuple[int, int]:
    lo, hi = _field_range(bits, signed)
    scale = sum(1 << (k * stride) for k in range(count))
    return lo * scale, hi * scale


def _fits(lo: int, hi: int, bits: int, signed: bool) -> bool:
    plo, phi = _field_range(bits, signed)
    return plo <= lo and hi <= phi


def field_stride(p, dsp: DspModel) -> int:
    ops = _as_operands(p)
    return ops.weight_bits + ops.act_bits + dsp.guard_bits


def is_feasible(p, m: int, n: int, dsp: DspModel) -> bool:
    """Analytic check that an m x n packing never overflows a port."""
    ops = _as_operands(p)
    s = field_stride(ops, dsp)
    a_lo, a_hi = _packed_range(ops.weight_bits, ops.weight_signed, m, s)
    b_lo, b_hi = _packed_range(ops.act_bits, ops.act_signed, n, m * s)
    if not _fits(a_lo, a_hi, dsp.op_a_bits, ops.weight_signed):
        return False
    if not _fits(b_lo, b_hi, dsp.op_b_bits, ops.act_signed):
        return False
    corners = [a * b for a, b in product((a_lo, a_hi), (b_lo, b_hi))]
    signed = ops.weight_signed or ops.act_signed
    return _fits(min(corners), max(corners), dsp.result_bits, signed)


def packing_factor(p, dsp: DspModel = INTEL) -> int:
    """Largest number of independent products one multiplier yields per cycle."""
    m, n = best_packing(p, dsp)
    return m * n


def best_packing(p, dsp: DspModel = INTEL) -> tuple[int, int]:
    ops = _as_operands(p)
    if not is_feasible(ops, 1, 1, dsp):
        raise PrecisionError(
            f"{ops.weight_bits}x{ops.act_bits}-bit product does not fit a "
            f"{dsp.op_a_bits}x{dsp.op_b_bits} multiplier"
        )
    best = (1, 1)
    for m in range(1, dsp.op_a_bits + 1):
        if not is_feasible(ops, m, 1, dsp):
            break
        for n in range(1, dsp.op_b_bits + 1):
            if not is_feasible(ops, m, n, dsp):
                break
            # prefer more products, then fewer packed weights
            if m * n > best[0] * best[1]:
                best = (m, n)
    return best


def dsp_utilization(p, dsp: DspModel = INTEL) -> float:
    ops = _as_operands(p)
    return packing_factor(ops, dsp) * ops.weight_bits * ops.act_bits / (dsp.op_a_bits * dsp.op_b_bits)


def _wrap(values: np.ndarray, bits: int, signed: bool) -> np.ndarray:
    mask = (1 << bits) - 1
    out = values & mask
    if signed:
        out = np.where(out >= (1 << (bits - 1)), out - (1 << bits), out)
    return out


def _operand_samples(ops: Operands, m: int, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    w_lo, w_hi = _field_range(ops.weight_bits, ops.weight_signed)
    a_lo, a_hi = _field_range(ops.act_bits, ops.act_signed)
    entropy = m * ops.weight_bits + n * ops.act_bits
    if entropy <= EXHAUSTIVE_ENTROPY_BITS:
        axes = [np.arange(w_lo, w_hi + 1)] * m + [np.arange(a_lo, a_hi + 1)] * n
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m + n)
        return grid[:, :m].astype(np.int64), grid[:, m:].astype(np.int64)
    rng = np.random.default_rng(seed)
    w = rng.integers(w_lo, w_hi + 1, size=(RANDOM_TRIALS, m), dtype=np.int64)
    a = rng.integers(a_lo, a_hi + 1, size=(RANDOM_TRIALS, n), dtype=np.int64)
    # extremes are where overflow shows up, so always include them
    w_corner = np.array(list(product((w_lo, w_hi), repeat=m)), dtype=np.int64)
    a_corner = np.array(list(product((a_lo, a_hi), repeat=n)), dtype=np.int64)
    wc = np.repeat(w_corner, len(a_corner), axis=0)
    ac = np.tile(a_corner, (len(w_corner), 1))
    return np.vstack([wc, w]), np.vstack([ac, a])


def verify_packing(p, m: int, n: int, dsp: DspModel = INTEL, seed: int = 0) -> bool:
    """Bit-level oracle: pack, multiply at port width, unpack, compare."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be at least 1")
    ops = _as_operands(p)
    s = field_stride(ops, dsp)
    if (m * n - 1) * s + ops.weight_bits + ops.act_bits > 62:
        return False
    w, a = _operand_samples(ops, m, n, seed)
    packed_a = sum(w[:, i] << (i * s) for i in range(m))
    packed_b = sum(a[:, j] << (j * m * s) for j in range(n))
    packed_a = _wrap(packed_a, dsp.op_a_bits, ops.weight_signed)
    packed_b = _wrap(packed_b, dsp.op_b_bits, ops.act_signed)
    signed = ops.weight_signed or ops.act_signed
    total = _wrap(packed_a * packed_b, dsp.result_bits, signed)
    for j in range(n):
        for i in range(m):
            offset = (i + j * m) * s
            field = _wrap(total >> offset, s, signed)
            if not np.array_equal(field, w[:, i] * a[:, j]):
                return False
            total = total - (field << offset)
    return bool(np.all(total == 0))


def sweep_rows(vendors=("xilinx", "intel"), weight_bits=(2, 4, 8), act_bits=range(2, 9)):
    """Rows of (vendor, P_W, P_I, packing_factor, utilization)."""
    rows = []
    for vendor in vendors:
        dsp = PRESETS[vendor]
        for wb in weight_bits:
            for ab in act_bits:
                ops = Operands(wb, ab)
                rows.append((vendor, wb, ab, packing_factor(ops, dsp), round(dsp_utilization(ops, dsp), 6)))
    return rows
