"""Functional model of one in-BRAM processing element (BPE).

The dummy array holds four partial-sum rows {0, W1, W2, W1+W2}, an INV row
and an accumulator row.  ``mac2`` is the arithmetic shortcut; ``mac2_rowwise``
walks the activation bits and selects rows the way the hardware does.  Both
must agree bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .precision import Variant, check_act_bits, check_weight_bits, lanes_per_bpe

ROW_NAMES = ("zero", "w1", "w2", "w1w2")


class GeometryError(ValueError):
    pass


class ActivationRangeError(ValueError):
    pass


def act_range(act_bits: int, signed: bool) -> tuple[int, int]:
    if signed:
        return -(1 << (act_bits - 1)), (1 << (act_bits - 1)) - 1
    return 0, (1 << act_bits) - 1


def split_fields(value: int, width: int, field_bits: int) -> list[int]:
    """Split a slice into signed fields, lane 0 = least significant."""
    if value < 0 or value >= 1 << width:
        raise GeometryError(f"slice 0x{value:x} wider than {width} bits")
    out = []
    for lane in range(width // field_bits):
        raw = (value >> (lane * field_bits)) & ((1 << field_bits) - 1)
        out.append(raw - (1 << field_bits) if raw >> (field_bits - 1) else raw)
    return out


def pack_fields(values, field_bits: int) -> int:
    word = 0
    for lane, v in enumerate(values):
        word |= (v & ((1 << field_bits) - 1)) << (lane * field_bits)
    return word


@dataclass
class Mac2Result:
    values: list[int]
    overflowed: list[bool]


@dataclass
class BpeState:
    variant: Variant
    weight_bits: int
    faithful: bool = False
    row_w1: list[int] = field(default_factory=list)
    row_w2: list[int] = field(default_factory=list)
    row_inv: list[int] = field(default_factory=list)
    row_acc: list[int] = field(default_factory=list)

    def __post_init__(self):
        check_weight_bits(self.weight_bits)
        n = self.lanes
        self.row_w1 = list(self.row_w1) or [0] * n
        self.row_w2 = list(self.row_w2) or [0] * n
        self.row_inv = list(self.row_inv) or [0] * n
        self.row_acc = list(self.row_acc) or [0] * n

    @property
    def lanes(self) -> int:
        return lanes_per_bpe(self.variant, self.weight_bits)

    @property
    def acc_width_bits(self) -> int | None:
        """Per-lane accumulator width, or None for the exact (wide) mode."""
        if not self.faithful:
            return None
        return self.variant.dummy_cols // self.lanes

    @property
    def row_zero(self) -> list[int]:
        return [0] * self.lanes

    @property
    def row_w1w2(self) -> list[int]:
        return [a + b for a, b in zip(self.row_w1, self.row_w2)]

    def rows(self) -> np.ndarray:
        """Partial-sum LUT as a (4, lanes) array indexed by {I2[t], I1[t]}."""
        return np.array([self.row_zero, self.row_w1, self.row_w2, self.row_w1w2], dtype=np.int64)


def load_weights(bpe: BpeState, w1_slice: int, w2_slice: int, weight_bits: int | None = None) -> BpeState:
    wb = bpe.weight_bits if weight_bits is None else weight_bits
    if wb != bpe.weight_bits:
        bpe = replace(bpe, weight_bits=wb, row_w1=[], row_w2=[], row_inv=[], row_acc=[])
    width = bpe.variant.slice_bits
    return replace(
        bpe,
        row_w1=split_fields(w1_slice, width, wb),
        row_w2=split_fields(w2_slice, width, wb),
        row_inv=[0] * bpe.lanes,
        row_acc=list(bpe.row_acc),
    )


def _check_acts(i1: int, i2: int, act_bits: int, act_signed: bool) -> None:
    check_act_bits(act_bits)
    lo, hi = act_range(act_bits, act_signed)
    for v in (i1, i2):
        if not lo <= v <= hi:
            raise ActivationRangeError(f"activation {v} outside [{lo}, {hi}] for {act_bits} bits")


def _commit(bpe: BpeState, products, accumulate: bool) -> tuple[BpeState, Mac2Result]:
    width = bpe.acc_width_bits
    acc, flags = [], []
    for lane, p in enumerate(products):
        value = int(p) + (bpe.row_acc[lane] if accumulate else 0)
        overflow = False
        if width is not None:
            wrapped = ((value + (1 << (width - 1))) % (1 << width)) - (1 << (width - 1))
            overflow = wrapped != value
            value = wrapped
        acc.append(value)
        flags.append(overflow)
    return replace(bpe, row_acc=acc), Mac2Result(list(acc), flags)


def mac2(bpe: BpeState, i1: int, i2: int, act_bits: int, act_signed: bool, accumulate: bool = False):
    _check_acts(i1, i2, act_bits, act_signed)
    products = [w1 * i1 + w2 * i2 for w1, w2 in zip(bpe.row_w1, bpe.row_w2)]
    return _commit(bpe, products, accumulate)


def rowwise_kernel(rows: np.ndarray, i1, i2, act_bits: int, act_signed: bool) -> np.ndarray:
    """Bit-serial MAC2 by row selection.

    ``rows`` has shape (4, ..., lanes); ``i1``/``i2`` broadcast against the
    middle axes.  At the MSB of a signed activation the selected row goes
    through the INV row, i.e. is subtracted instead of added.
    """
    i1 = np.asarray(i1, dtype=np.int64)[..., None]
    i2 = np.asarray(i2, dtype=np.int64)[..., None]
    mask = (1 << act_bits) - 1
    u1, u2 = i1 & mask, i2 & mask
    p = np.zeros(np.broadcast_shapes(rows.shape[1:], u1.shape), dtype=np.int64)
    for t in range(act_bits):
        sel = ((u1 >> t) & 1) + 2 * ((u2 >> t) & 1)
        chosen = np.take_along_axis(rows, np.broadcast_to(sel, p.shape)[None], axis=0)[0]
        if act_signed and t == act_bits - 1:
            p -= chosen << t
        else:
            p += chosen << t
    return p


def mac2_rowwise(bpe: BpeState, i1: int, i2: int, act_bits: int, act_signed: bool, accumulate: bool = False):
    _check_acts(i1, i2, act_bits, act_signed)
    rows = bpe.rows()
    mask = (1 << act_bits) - 1
    trace = []
    for t in range(act_bits):
        sel = ((i1 & mask) >> t & 1) + 2 * ((i2 & mask) >> t & 1)
        name = ROW_NAMES[sel]
        if act_signed and t == act_bits - 1:
            name = f"inv({name})"
        trace.append((t, name, t))
    products = rowwise_kernel(rows, i1, i2, act_bits, act_signed)
    state, result = _commit(bpe, products.tolist(), accumulate)
    if act_signed:
        msb_sel = ((i1 & mask) >> (act_bits - 1) & 1) + 2 * ((i2 & mask) >> (act_bits - 1) & 1)
        state = replace(state, row_inv=[-v for v in rows[msb_sel].tolist()])
    return state, result, trace


def format_trace(trace) -> str:
    return "\n".join(f"({t}, {row}, {shift})" for t, row, shift in trace)
