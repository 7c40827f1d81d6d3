"""Tiled DLA-style performance model with a BPE engine next to the DSP engine.

Each tile's output columns (Q_VEC) are split between the two engines.  The
DSP array has K_VEC x C_VEC x P_VEC lanes and sweeps its columns and filter
positions one per cycle.  The BPE engine is a grid of ceil(K_VEC/N_W) x C_VEC
compute-in-BRAM blocks (filters stored once, no replication); each block works
on N_I output pixels at a time and retires two reduction elements per MAC2.
Tiles run through a load/compute/store pipeline with double buffering.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from math import ceil

import numpy as np

from .dsp_packing import INTEL, DspModel, packing_factor
from .engine_perf import ArchitectureProfile, Arch, EngineRate, block_rate, profile
from .precision import PrecisionConfig, Pumping


class ConfigError(ValueError):
    pass


class LayerKind(str, Enum):
    CONV = "conv"
    FC = "fc"
    MATMUL = "matmul"


@dataclass(frozen=True)
class LayerShape:
    c: int
    k: int
    p: int = 1
    q: int = 1
    r: int = 1
    s: int = 1
    stride: int = 1
    padding: int = 0
    kind: LayerKind = LayerKind.CONV
    name: str = ""

    def __post_init__(self):
        for f in ("c", "k", "p", "q", "r", "s", "stride"):
            if getattr(self, f) < 1:
                raise ValueError(f"layer {self.name or '?'}: {f} must be positive")
        if self.padding < 0:
            raise ValueError(f"layer {self.name or '?'}: padding must be non-negative")

    @property
    def macs(self) -> int:
        return self.k * self.p * self.q * self.c * self.r * self.s

    def scaled(self, k: int) -> "LayerShape":
        return replace(self, k=k)


def convert_matmul_to_conv(m: int, n: int, l: int, name: str = "") -> LayerShape:
    """(M x N) @ (N x L) as a 1-D convolution: N input channels, M filters, L columns."""
    return LayerShape(c=n, k=m, p=1, q=l, kind=LayerKind.MATMUL, name=name)


def fc_layer(n_in: int, n_out: int, name: str = "") -> LayerShape:
    return LayerShape(c=n_in, k=n_out, kind=LayerKind.FC, name=name)


@dataclass(frozen=True)
class TilingConfig:
    c_vec: int
    k_vec: int
    r_vec: int = 1
    p_vec: int = 1
    q_vec: int = 1
    q_bpe: int = 0  # output columns of each tile handed to the BPE engine

    def __post_init__(self):
        for f in ("c_vec", "k_vec", "r_vec", "p_vec", "q_vec"):
            if getattr(self, f) < 1:
                raise ConfigError(f"{f} must be at least 1")
        if not 0 <= self.q_bpe <= self.q_vec:
            raise ConfigError(f"q_bpe={self.q_bpe} outside 0..q_vec={self.q_vec}")

    @property
    def q_split_bpe(self) -> float:
        return self.q_bpe / self.q_vec

    @property
    def q_dsp(self) -> int:
        return self.q_vec - self.q_bpe

    def key(self) -> tuple:
        return (self.k_vec, self.c_vec, self.q_vec, self.p_vec, self.r_vec, self.q_bpe)


@dataclass(frozen=True)
class AccelConfig:
    """Everything besides the tiling that fixes the engines."""

    arch: ArchitectureProfile = field(default_factory=lambda: profile(Arch.PLAIN))
    precision: PrecisionConfig = field(default_factory=lambda: PrecisionConfig(8, 8))
    pumping: Pumping = Pumping.SY
    n_i: int = 1
    dsp: DspModel = INTEL
    bytes_per_cycle: int = 4096
    out_bytes: int = 1
    stall_override: int | None = None

    def __post_init__(self):
        if self.arch.is_m4bram and self.n_i not in self.arch.n_i_options:
            raise ConfigError(f"n_i={self.n_i} not supported by {self.arch.name.value}")
        if self.bytes_per_cycle <= 0:
            raise ConfigError("bytes_per_cycle must be positive")

    @property
    def bpe_rate(self) -> EngineRate | None:
        if not self.arch.has_cim:
            return None
        return block_rate(self.arch, self.pumping, self.precision)

    @property
    def n_w(self) -> int:
        rate = self.bpe_rate
        if rate is None:
            return 1
        if self.arch.is_m4bram:
            return rate.n_w // self.n_i
        return rate.n_w

    @property
    def pixels_per_mac2(self) -> int:
        """Output pixels a BPE block serves per MAC2 (N_I; fixed for BRAMAC)."""
        if self.arch.is_m4bram:
            return self.n_i
        rate = self.bpe_rate
        return rate.n_i if rate else 1

    @property
    def period(self) -> int:
        return self.bpe_rate.mac2_period_cycles

    @property
    def readout_stall(self) -> int:
        if self.stall_override is not None:
            return self.stall_override
        rate = self.bpe_rate
        return rate.readout_stall_cycles if rate else 0

    @property
    def packing(self) -> int:
        return packing_factor(self.precision, self.dsp)

    @property
    def label(self) -> str:
        if not self.arch.has_cim:
            return "DLA"
        if self.arch.is_m4bram:
            return f"{self.pumping.value}-M4{self.arch.kind.value}"
        return self.arch.name.value


@dataclass(frozen=True)
class EngineGeometry:
    dsp_lanes: int
    dsp_blocks: int
    bpe_blocks: int
    bpe_lanes_per_block: int  # MACs in flight per block per MAC2 = 2 * N_W * N_I


def engine_geometry(t: TilingConfig, cfg: AccelConfig) -> EngineGeometry:
    if t.q_bpe and not cfg.arch.has_cim:
        raise ConfigError("plain BRAM has no BPE engine; q_bpe must be 0")
    dsp_lanes = t.k_vec * t.c_vec * t.p_vec if t.q_dsp else 0
    per_dsp = cfg.dsp.multipliers_per_block * cfg.packing
    dsp_blocks = ceil(dsp_lanes / per_dsp)
    if t.q_bpe:
        bpe_blocks = ceil(t.k_vec / cfg.n_w) * t.c_vec
        lanes = 2 * cfg.n_w * cfg.pixels_per_mac2
    else:
        bpe_blocks, lanes = 0, 0
    return EngineGeometry(dsp_lanes, dsp_blocks, bpe_blocks, lanes)


@dataclass(frozen=True)
class LayerPerf:
    name: str
    macs: int
    bpe_macs: int
    dsp_macs: int
    tile_count: int
    bpe_cycles: int
    dsp_cycles: int
    dsp_stall_cycles: int
    compute_cycles: int
    load_cycles: int
    store_cycles: int
    latency: int
    bpe_utilization: float
    dsp_utilization: float


def _extents(total: int, vec: int) -> np.ndarray:
    n = ceil(total / vec)
    out = np.full(n, vec, dtype=np.int64)
    out[-1] = total - (n - 1) * vec
    return out


def pipeline_latency(load, compute, store) -> int:
    """Three-stage double-buffered pipeline: load i+1 | compute i | store i-1."""
    load, compute, store = (np.asarray(a, dtype=np.int64) for a in (load, compute, store))
    nxt_load = np.append(load[1:], 0)
    prev_store = np.insert(store[:-1], 0, 0)
    steady = np.maximum(compute, np.maximum(nxt_load, prev_store))
    return int(load[0] + steady.sum() + store[-1])


def tile_layer(layer: LayerShape, t: TilingConfig) -> list[dict]:
    """Explicit tile list in execution order (K, P, Q outer; C, R, S inner)."""
    tiles = []
    for kt in _extents(layer.k, t.k_vec):
        for pt in _extents(layer.p, t.p_vec):
            for qt in _extents(layer.q, t.q_vec):
                for ct in _extents(layer.c, t.c_vec):
                    for rt in _extents(layer.r, t.r_vec):
                        for st in _extents(layer.s, t.r_vec):
                            tiles.append(dict(k=int(kt), p=int(pt), q=int(qt), c=int(ct), r=int(rt), s=int(st)))
    return tiles


def _tile_arrays(layer: LayerShape, t: TilingConfig):
    ek, ep, eq = _extents(layer.k, t.k_vec), _extents(layer.p, t.p_vec), _extents(layer.q, t.q_vec)
    ec = _extents(layer.c, t.c_vec)
    er, es = _extents(layer.r, t.r_vec), _extents(layer.s, t.r_vec)
    err = (er[:, None] * es[None, :]).ravel()
    erow = (er[:, None] + 0 * es[None, :]).ravel()
    ecol = (0 * er[:, None] + es[None, :]).ravel()
    shape = (len(ek), len(ep), len(eq), len(ec), len(err))
    grids = np.meshgrid(ek, ep, eq, ec, np.arange(len(err)), indexing="ij")
    k, p, q, c, ridx = (g.ravel() for g in grids)
    inner = len(ec) * len(err)
    last_inner = (np.arange(k.size) % inner) == inner - 1
    return k, p, q, c, err[ridx], erow[ridx], ecol[ridx], last_inner, shape


def tile_times(pt, qt, ct, rr, last_inner, c_vec, q_vec, q_bpe, n_i, cfg: AccelConfig):
    """Per-tile engine timing; every argument except cfg may be a numpy array.

    Returns (qb, bpe_cycles, dsp_cycles, stall_cycles, compute_cycles).  Edge
    tiles hand floor(qt * q_bpe / q_vec) columns to the BPE side; the
    remainder stays on the DSP.  The DSP array reduces C_VEC channels per
    cycle, while the BPE blocks split the tile's flattened C x R x S
    reduction evenly, so a thin layer such as a 3-channel stem keeps them busy.
    Each output pixel group is read out once, after the last inner tile has
    completed its C x R x S accumulation.
    """
    qb = (qt * q_bpe) // q_vec
    qd = qt - qb
    groups = -(-(pt * qb) // n_i)
    if cfg.arch.has_cim:
        per_block = -(-(ct * rr) // c_vec)
        bpe = (groups * per_block * cfg.period + 1) // 2  # two reduction elements per MAC2
        readouts = np.where(last_inner, groups, 0)
    else:
        bpe = np.zeros_like(groups)
        readouts = bpe
    dsp = qd * rr
    if cfg.arch.allows_dsp_access_during_cim:
        stall = np.where(qd > 0, readouts * cfg.readout_stall, 0)
    else:
        # Partitioned pool: the DSP never waits, the CIM block drains its own result.
        stall = np.zeros_like(dsp)
        bpe = bpe + readouts * cfg.readout_stall
    return qb, bpe, dsp, stall, np.maximum(bpe, dsp + stall)


def _simulate_layer(layer: LayerShape, t: TilingConfig, cfg: AccelConfig) -> LayerPerf:
    geo = engine_geometry(t, cfg)
    k, p, q, c, rr, rows, cols, last_inner, _ = _tile_arrays(layer, t)
    n_i = cfg.pixels_per_mac2 if t.q_bpe else 1
    qb, bpe_cycles, dsp_cycles, stalls, compute = tile_times(
        p, q, c, rr, last_inner, t.c_vec, t.q_vec, t.q_bpe, n_i, cfg)
    base = k * c * rr * p
    bpe_macs = base * qb
    dsp_macs = base * (q - qb)

    in_rows = (p - 1) * layer.stride + rows
    in_cols = (q - 1) * layer.stride + cols
    bits = c * in_rows * in_cols * cfg.precision.act_bits + k * c * rr * cfg.precision.weight_bits
    bw_bits = 8 * cfg.bytes_per_cycle
    load = -(-bits // bw_bits)
    store = np.where(last_inner, -(-(k * p * q * cfg.out_bytes) // cfg.bytes_per_cycle), 0)

    latency = pipeline_latency(load, compute, store)
    bpe_busy = int(bpe_cycles.sum())
    dsp_busy = int(dsp_cycles.sum())
    bpe_total = int(bpe_macs.sum())
    dsp_total = int(dsp_macs.sum())
    if bpe_busy > 0:
        bpe_util = bpe_total / (geo.bpe_blocks * geo.bpe_lanes_per_block / cfg.period * bpe_busy)
    else:
        bpe_util = 0.0
    dsp_util = dsp_total / (geo.dsp_lanes * dsp_busy) if dsp_busy > 0 else 0.0
    return LayerPerf(
        name=layer.name,
        macs=layer.macs,
        bpe_macs=bpe_total,
        dsp_macs=dsp_total,
        tile_count=int(k.size),
        bpe_cycles=bpe_busy,
        dsp_cycles=dsp_busy,
        dsp_stall_cycles=int(stalls.sum()),
        compute_cycles=int(compute.sum()),
        load_cycles=int(load.sum()),
        store_cycles=int(store.sum()),
        latency=latency,
        bpe_utilization=bpe_util,
        dsp_utilization=dsp_util,
    )


simulate_layer = lru_cache(maxsize=1 << 16)(_simulate_layer)


@dataclass
class PerfReport:
    network: str
    config_label: str
    tiling: TilingConfig | None
    layers: list[LayerPerf]
    area: float = 0.0

    @property
    def latency(self) -> int:
        return sum(lp.latency for lp in self.layers)

    @property
    def macs(self) -> int:
        return sum(lp.macs for lp in self.layers)

    @property
    def perf(self) -> float:
        """Throughput in MACs per cycle."""
        return self.macs / self.latency

    @property
    def dsp_stall_cycles(self) -> int:
        return sum(lp.dsp_stall_cycles for lp in self.layers)

    @property
    def stall_fraction(self) -> float:
        return self.dsp_stall_cycles / self.latency

    def speedup_over(self, baseline: "PerfReport") -> float:
        return baseline.latency / self.latency

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for i, lp in enumerate(self.layers):
            w.writerow([
                lp.name or f"layer{i}", lp.macs, lp.bpe_cycles, lp.dsp_cycles,
                lp.dsp_stall_cycles, lp.load_cycles, lp.store_cycles,
                lp.latency, _fmt(lp.bpe_utilization), _fmt(lp.dsp_utilization),
            ])
        return buf.getvalue()


REPORT_COLUMNS = ("layer", "macs", "bpe_cycles", "dsp_cycles", "stall_cycles", "load", "store",
                  "latency", "bpe_util", "dsp_util")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def simulate_network(layers, t: TilingConfig, cfg: AccelConfig, name: str = "net") -> PerfReport:
    perfs = [simulate_layer(layer, t, cfg) for layer in layers]
    return PerfReport(name, cfg.label, t, perfs)


def _classes(total: int, vec):
    """(extent, count) for full and edge tiles, plus the extent of the last tile."""
    vec = np.asarray(vec, dtype=np.int64)
    full, rem = total // vec, total % vec
    last = np.where(rem > 0, rem, vec)
    return [(vec, full), (rem, (rem > 0).astype(np.int64))], last


def layer_compute_cycles(layer: LayerShape, k_vec, c_vec, p_vec, q_vec, r_vec, q_bpe, n_i,
                         cfg: AccelConfig):
    """Exact sum of per-tile compute cycles (and stalls) without walking the tiles.

    Tiles with equal extents take equal time, so summing over at most two
    extents per dimension reproduces the tile walk.  Every tiling argument
    may be an array, which lets the search score many candidates at once.
    """
    nk = -(-layer.k // np.asarray(k_vec))
    pcls, _ = _classes(layer.p, p_vec)
    qcls, _ = _classes(layer.q, q_vec)
    ccls, clast = _classes(layer.c, c_vec)
    rcls, rlast = _classes(layer.r, r_vec)
    scls, slast = _classes(layer.s, r_vec)
    rr_last = rlast * slast
    compute = 0
    stall = 0
    for pt, pn in pcls:
        for qt, qn in qcls:
            def t(ct, rr, last):
                out = tile_times(pt, qt, ct, rr, last, c_vec, q_vec, q_bpe, n_i, cfg)
                return out[4], out[3]
            inner_c = 0
            inner_s = 0
            for ct, cn in ccls:
                for rt, rn in rcls:
                    for st, sn in scls:
                        cc, ss = t(ct, rt * st, False)
                        inner_c = inner_c + cn * rn * sn * cc
                        inner_s = inner_s + cn * rn * sn * ss
            c_mid, s_mid = t(clast, rr_last, False)
            c_end, s_end = t(clast, rr_last, True)
            weight = nk * pn * qn
            compute = compute + weight * (inner_c - c_mid + c_end)
            stall = stall + weight * (inner_s - s_mid + s_end)
    return compute, stall
