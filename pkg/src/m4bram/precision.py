"""Precision and parallelism semantics shared by every M4BRAM model."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

WEIGHT_BITS = (2, 4, 8)
MIN_ACT_BITS = 2
MAX_ACT_BITS = 8
NUM_BPES = 4


class PrecisionError(ValueError):
    """Unsupported weight/activation precision."""


class Kind(str, Enum):
    S = "S"
    L = "L"


class Pumping(str, Enum):
    SY = "SY"
    DP = "DP"


@dataclass(frozen=True)
class PrecisionConfig:
    weight_bits: int
    act_bits: int
    act_signed: bool = False  # post-ReLU activations are non-negative

    def __post_init__(self):
        check_weight_bits(self.weight_bits)
        check_act_bits(self.act_bits)


@dataclass(frozen=True)
class Variant:
    kind: Kind = Kind.S
    pumping: Pumping = Pumping.SY

    @property
    def dummy_rows(self) -> int:
        return 7

    @property
    def dummy_cols(self) -> int:
        return 32 if self.kind is Kind.S else 64

    @property
    def slice_bits(self) -> int:
        # weight bits delivered to one BPE per fetch
        return 8 if self.kind is Kind.S else 16

    @property
    def double_pumped(self) -> bool:
        return self.pumping is Pumping.DP

    @property
    def label(self) -> str:
        return f"{self.pumping.value}-M4{self.kind.value}"


@dataclass(frozen=True)
class ParallelismConfig:
    n_w: int
    n_i: int


def check_weight_bits(weight_bits: int) -> None:
    if weight_bits not in WEIGHT_BITS:
        raise PrecisionError(f"weight precision must be one of {WEIGHT_BITS}, got {weight_bits}")


def check_act_bits(act_bits: int) -> None:
    if not MIN_ACT_BITS <= act_bits <= MAX_ACT_BITS:
        raise PrecisionError(
            f"activation precision must lie in [{MIN_ACT_BITS}, {MAX_ACT_BITS}], got {act_bits}"
        )


def lanes_per_bpe(variant: Variant, weight_bits: int) -> int:
    """Number of weight fields one BPE multiplies by a single activation."""
    check_weight_bits(weight_bits)
    return variant.slice_bits // weight_bits


def parallelism_options(variant: Variant, weight_bits: int) -> list[ParallelismConfig]:
    lanes = lanes_per_bpe(variant, weight_bits)
    return [ParallelismConfig(n_w=NUM_BPES * lanes // n_i, n_i=n_i) for n_i in (1, 2, 4)]
