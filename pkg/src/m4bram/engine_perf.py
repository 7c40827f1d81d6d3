"""Closed-form throughput models for the BPE, BRAMAC and DSP engines."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from math import ceil

from .dsp_packing import INTEL, DspModel, packing_factor
from .precision import NUM_BPES, Kind, PrecisionConfig, PrecisionError, Pumping, Variant, lanes_per_bpe


class UnsupportedProfileError(ValueError):
    pass


class Arch(str, Enum):
    M4BRAM_S = "M4BRAM_S"
    M4BRAM_L = "M4BRAM_L"
    BRAMAC_1DA = "BRAMAC_1DA"
    BRAMAC_2SA = "BRAMAC_2SA"
    PLAIN = "PlainBram"
    CCB = "CCB"
    COMEFA_D = "CoMeFa_D"
    COMEFA_A = "CoMeFa_A"


@dataclass(frozen=True)
class ArchitectureProfile:
    name: Arch
    dummy_arrays: int
    dummy_geometry: tuple[int, int] | None
    n_i_options: frozenset
    ports_occupied_in_cim: int
    m20k_area_overhead: float
    allows_dsp_access_during_cim: bool
    supports_double_pumping: bool
    transposed_layout: bool = False
    supports_mixed_precision: bool = False

    @property
    def is_m4bram(self) -> bool:
        return self.name in (Arch.M4BRAM_S, Arch.M4BRAM_L)

    @property
    def is_bramac(self) -> bool:
        return self.name in (Arch.BRAMAC_1DA, Arch.BRAMAC_2SA)

    @property
    def has_cim(self) -> bool:
        return self.name is not Arch.PLAIN

    @property
    def kind(self) -> Kind:
        return Kind.L if self.name is Arch.M4BRAM_L else Kind.S


_NI_124 = frozenset({1, 2, 4})

PROFILES: dict[Arch, ArchitectureProfile] = {
    Arch.CCB: ArchitectureProfile(Arch.CCB, 0, None, frozenset({1}), 2, 0.168, False, False, True, True),
    Arch.COMEFA_D: ArchitectureProfile(Arch.COMEFA_D, 0, None, frozenset({1}), 2, 0.254, False, False, True, True),
    Arch.COMEFA_A: ArchitectureProfile(Arch.COMEFA_A, 0, None, frozenset({1}), 2, 0.081, False, True, True, True),
    Arch.BRAMAC_1DA: ArchitectureProfile(Arch.BRAMAC_1DA, 1, (7, 160), frozenset({1}), 2, 0.169, False, True),
    Arch.BRAMAC_2SA: ArchitectureProfile(Arch.BRAMAC_2SA, 2, (7, 160), frozenset({2}), 2, 0.338, False, False),
    Arch.M4BRAM_S: ArchitectureProfile(Arch.M4BRAM_S, 4, (7, 32), _NI_124, 1, 0.196, True, True, False, True),
    Arch.M4BRAM_L: ArchitectureProfile(Arch.M4BRAM_L, 4, (7, 64), _NI_124, 1, 0.334, True, True, False, True),
    Arch.PLAIN: ArchitectureProfile(Arch.PLAIN, 0, None, frozenset(), 0, 0.0, True, False),
}

METADATA_ONLY = (Arch.CCB, Arch.COMEFA_D, Arch.COMEFA_A)


def profile(name) -> ArchitectureProfile:
    arch = Arch(name)
    return PROFILES[arch]


@dataclass(frozen=True)
class EngineRate:
    macs_per_cycle: Fraction
    mac2_period_cycles: int
    readout_stall_cycles: int
    n_w: int = 1
    n_i: int = 1
    clock_scale: float = 1.0


def mac2_period(variant: Variant, act_bits: int) -> int:
    if variant.pumping is Pumping.DP:
        return ceil(act_bits / 2) + 2
    return act_bits + 2


def m4bram_peak_rate(variant: Variant, p: PrecisionConfig) -> EngineRate:
    """Peak MACs per main-clock cycle of one M4BRAM block."""
    lanes = lanes_per_bpe(variant, p.weight_bits)
    period = mac2_period(variant, p.act_bits)
    return EngineRate(
        macs_per_cycle=Fraction(NUM_BPES * lanes * 2, period),
        mac2_period_cycles=period,
        readout_stall_cycles=4 if variant.kind is Kind.S else 8,
        n_w=NUM_BPES * lanes,
        n_i=1,
    )


def bramac_weights_per_activation(precision_bits: int) -> int:
    if precision_bits not in (2, 4, 8):
        raise PrecisionError("BRAMAC supports 2, 4 or 8-bit operands only")
    return 40 // precision_bits


def bramac_peak_rate(prof: ArchitectureProfile, precision_bits: int, act_bits: int | None = None) -> EngineRate:
    """Peak rate of one BRAMAC block; weights and activations share a precision."""
    if not prof.is_bramac:
        raise UnsupportedProfileError(f"{prof.name.value} is not a BRAMAC profile")
    if act_bits is not None and act_bits != precision_bits:
        raise UnsupportedProfileError("BRAMAC requires equal weight and activation precision")
    weights = bramac_weights_per_activation(precision_bits)
    readout = 160 // 32 * prof.dummy_arrays
    if prof.name is Arch.BRAMAC_1DA:
        period = ceil(precision_bits / 2) + 2
        return EngineRate(Fraction(weights * 2, period), period, readout, n_w=weights, n_i=1)
    period = precision_bits + 2
    return EngineRate(Fraction(2 * weights * 2, period), period, readout, n_w=weights, n_i=2)


def dsp_engine_rate(dsp_blocks: int, p, dsp: DspModel = INTEL) -> EngineRate:
    if dsp_blocks < 0:
        raise ValueError("dsp_blocks must be non-negative")
    rate = dsp_blocks * dsp.multipliers_per_block * packing_factor(p, dsp)
    return EngineRate(Fraction(rate), 1, 0)


def block_rate(arch: ArchitectureProfile, pumping: Pumping, p: PrecisionConfig) -> EngineRate:
    """Per-block engine rate for any instantiable CIM profile."""
    if arch.name in METADATA_ONLY:
        raise UnsupportedProfileError(f"{arch.name.value} is metadata-only")
    if arch.is_m4bram:
        if pumping is Pumping.DP and not arch.supports_double_pumping:
            raise UnsupportedProfileError("profile cannot be double-pumped")
        return m4bram_peak_rate(Variant(arch.kind, pumping), p)
    if arch.is_bramac:
        return bramac_peak_rate(arch, p.weight_bits, p.act_bits)
    raise UnsupportedProfileError(f"{arch.name.value} has no BPE engine")


PROFILE_COLUMNS = (
    "name", "dummy_arrays", "dummy_geometry", "n_i_options", "ports_occupied_in_cim",
    "m20k_area_overhead", "allows_dsp_access_during_cim", "supports_double_pumping",
    "transposed_layout", "supports_mixed_precision",
)


def profiles_csv() -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROFILE_COLUMNS)
    for prof in PROFILES.values():
        geom = "x".join(map(str, prof.dummy_geometry)) if prof.dummy_geometry else "-"
        w.writerow([
            prof.name.value, prof.dummy_arrays, geom,
            "/".join(str(n) for n in sorted(prof.n_i_options)) or "-",
            prof.ports_occupied_in_cim, f"{prof.m20k_area_overhead:.3f}",
            int(prof.allows_dsp_access_during_cim), int(prof.supports_double_pumping),
            int(prof.transposed_layout), int(prof.supports_mixed_precision),
        ])
    return buf.getvalue()
