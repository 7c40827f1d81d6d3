"""Experiment suites: each runner returns rows and writes one CSV."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

from .dse import GX400, GX650, GX_DSP, GX_M4, FpgaTarget, InfeasibleError, search
from .dsp_packing import packing_factor
from .engine_perf import Arch, profile
from .hetero_dla import (
    AccelConfig,
    ConfigError,
    LayerPerf,
    PerfReport,
)
from .io_utils import atomic_write
from .networks import BENCHMARKS, builtin
from .precision import PrecisionConfig, Pumping


@dataclass(frozen=True)
class EngineChoice:
    label: str
    arch: Arch
    pumping: Pumping = Pumping.SY
    n_i_allowed: tuple = (1, 2, 4)

    def config(self, p: PrecisionConfig) -> AccelConfig:
        return AccelConfig(arch=profile(self.arch), precision=p, pumping=self.pumping)


DLA = EngineChoice("DLA", Arch.PLAIN)
DP_M4S = EngineChoice("DP-M4S", Arch.M4BRAM_S, Pumping.DP)
SY_M4L = EngineChoice("SY-M4L", Arch.M4BRAM_L, Pumping.SY)
DP_M4L = EngineChoice("DP-M4L", Arch.M4BRAM_L, Pumping.DP)
BRAMAC_1DA = EngineChoice("BRAMAC-1DA", Arch.BRAMAC_1DA, Pumping.DP, (1,))
BRAMAC_2SA = EngineChoice("BRAMAC-2SA", Arch.BRAMAC_2SA, Pumping.SY, (2,))


@lru_cache(maxsize=None)
def best(net: str, tgt: FpgaTarget, choice: EngineChoice, p: PrecisionConfig):
    layers = builtin(net).layers
    return search(layers, tgt, choice.config(p), choice.n_i_allowed, name=net)


@dataclass(frozen=True)
class Scenario:
    id: str
    networks: tuple = BENCHMARKS
    precisions: tuple = ()
    configs: tuple = ()
    fpga: FpgaTarget | None = GX650
    baseline: EngineChoice = DLA
    notes: str = ""


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def geomean(xs) -> float:
    xs = list(xs)
    return math.exp(sum(math.log(x) for x in xs) / len(xs))


# ---------------------------------------------------------------- activation sweep

SWEEP_COLUMNS = ("network", "weight_bits", "act_bits", "config", "dsp_packing", "speedup",
                 "stall_fraction", "n_i", "k_vec", "c_vec", "q_vec", "p_vec", "r_vec", "q_bpe")


def _tiling_cols(res):
    t = res.tiling
    return [res.config.n_i if res.config.arch.is_m4bram else res.config.pixels_per_mac2,
            t.k_vec, t.c_vec, t.q_vec, t.p_vec, t.r_vec, t.q_bpe]


def activation_sweep(networks=BENCHMARKS, acts=(8, 7, 6, 5, 4), weight_bits=8, tgt=GX650,
                     configs=(DP_M4S, SY_M4L, DP_M4L)):
    rows = []
    for net in networks:
        for a in acts:
            p = PrecisionConfig(weight_bits, a)
            base = best(net, tgt, DLA, p)
            for ch in configs:
                r = best(net, tgt, ch, p)
                rows.append([net, weight_bits, a, ch.label, packing_factor(p), r.report.speedup_over(base.report),
                             r.report.stall_fraction, *_tiling_cols(r)])
    return rows


# ---------------------------------------------------------------- BRAMAC comparison

BIG_NETS = ("vgg16", "resnet18", "resnet34")


def bramac_target(net: str, bits: int) -> FpgaTarget:
    return GX650 if bits == 8 and net in BIG_NETS else GX400


COMPARE_COLUMNS = ("network", "bits", "fpga", "config", "speedup", "n_i", "k_vec", "c_vec", "q_vec",
                   "p_vec", "r_vec", "q_bpe")


def bramac_compare(networks=BENCHMARKS, bits=(2, 4, 8), configs=(BRAMAC_1DA, BRAMAC_2SA, DP_M4S, SY_M4L)):
    rows = []
    for net in networks:
        for b in bits:
            p = PrecisionConfig(b, b)
            tgt = bramac_target(net, b)
            base = best(net, tgt, DLA, p)
            for ch in configs:
                r = best(net, tgt, ch, p)
                rows.append([net, b, tgt.name, ch.label, r.report.speedup_over(base.report), *_tiling_cols(r)])
    return rows


ABLATION_NETS = ("alexnet", "resnet18", "resnet34")
NI_SETS = ((1,), (1, 2), (1, 2, 4))


def ablation(networks=ABLATION_NETS, bits=(2, 4, 8), ni_sets=NI_SETS):
    """DP-M4S restricted to growing N_I sets, relative to BRAMAC-1DA."""
    rows = []
    for net in networks:
        for b in bits:
            p = PrecisionConfig(b, b)
            tgt = bramac_target(net, b)
            ref = best(net, tgt, BRAMAC_1DA, p)
            for nis in ni_sets:
                ch = replace(DP_M4S, label="DP-M4S{" + ",".join(map(str, nis)) + "}", n_i_allowed=nis)
                r = best(net, tgt, ch, p)
                rows.append([net, b, tgt.name, ch.label, r.report.speedup_over(ref.report), *_tiling_cols(r)])
    return rows


# ---------------------------------------------------------------- iso-area

ISO_COLUMNS = ("network", "weight_bits", "act_bits", "gx_m4_perf", "gx_dsp_perf", "speedup",
               "gx_m4_brams", "gx_dsp_dsps")


def iso_area(networks=ABLATION_NETS, acts=(4, 5, 6, 7, 8), weight_bits=8, m4=SY_M4L):
    rows = []
    for net in networks:
        for a in acts:
            p = PrecisionConfig(weight_bits, a)
            m = best(net, GX_M4, m4, p)
            d = best(net, GX_DSP, DLA, p)
            rows.append([net, weight_bits, a, m.report.perf, d.report.perf, m.report.speedup_over(d.report),
                         m.usage.bram_blocks, d.usage.dsp_blocks])
    return rows


# ---------------------------------------------------------------- intra-layer mixed weights

PARTITIONS = (1 / 16, 1 / 8, 3 / 16, 1 / 4, 3 / 8, 1 / 2, 5 / 8, 3 / 4)


def split_filters(layers, ratio_8bit: float):
    eight, four = [], []
    for l in layers:
        k8 = round(ratio_8bit * l.k)
        eight.append(replace(l, k=k8) if k8 else None)
        four.append(replace(l, k=l.k - k8) if l.k - k8 else None)
    return eight, four


def _sub_target(t: FpgaTarget, frac: float, name: str) -> FpgaTarget:
    return replace(t, name=name, dsp_blocks=int(t.dsp_blocks * frac), m20k_blocks=int(t.m20k_blocks * frac))


def _merge(a: LayerPerf | None, b: LayerPerf | None) -> LayerPerf:
    if a is None or b is None:
        return a or b
    slow = a if a.latency >= b.latency else b
    return replace(
        slow,
        macs=a.macs + b.macs,
        bpe_macs=a.bpe_macs + b.bpe_macs,
        dsp_macs=a.dsp_macs + b.dsp_macs,
        tile_count=a.tile_count + b.tile_count,
    )


def _group_perfs(layers, tgt, cfg, n_i_allowed, name):
    present = [l for l in layers if l is not None]
    if not present:
        return [None] * len(layers), None
    res = search(present, tgt, cfg, n_i_allowed, name=name)
    it = iter(res.report.layers)
    return [next(it) if l is not None else None for l in layers], res


def intra_layer_mixed_weights(layers, ratio_8bit: float, tgt: FpgaTarget = GX400, act_bits: int = 6,
                              choice: EngineChoice = SY_M4L, partition: float | None = None,
                              name: str = "net") -> PerfReport:
    """Filters split into an 8-bit and a 4-bit group running side by side.

    Each group gets `partition` (8-bit share) of the DSPs and M20Ks and its
    own tiling; a layer finishes when the slower group does.  Without an
    explicit partition the best share from PARTITIONS is used.
    """
    if not 0.0 <= ratio_8bit <= 1.0:
        raise ConfigError("ratio_8bit must lie in [0, 1]")
    layers = list(layers)
    eight, four = split_filters(layers, ratio_8bit)
    p8, p4 = PrecisionConfig(8, act_bits), PrecisionConfig(4, act_bits)
    if all(l is None for l in eight) or all(l is None for l in four):
        p = p4 if all(l is None for l in eight) else p8
        res = search(layers, tgt, choice.config(p), choice.n_i_allowed, name=name)
        return res.report
    shares = PARTITIONS if partition is None else (partition,)
    best_rep = None
    for f in shares:
        if not 0.0 < f < 1.0:
            raise ConfigError("partition must lie strictly between 0 and 1")
        try:
            l8, _ = _group_perfs(eight, _sub_target(tgt, f, f"{tgt.name}-8b"), choice.config(p8),
                                 choice.n_i_allowed, name)
            l4, _ = _group_perfs(four, _sub_target(tgt, 1 - f, f"{tgt.name}-4b"), choice.config(p4),
                                 choice.n_i_allowed, name)
        except InfeasibleError as exc:
            if partition is not None:
                raise ConfigError(f"partition {f} infeasible: {exc}") from None
            continue
        rep = PerfReport(name, f"{choice.label}-mixed", None, [_merge(a, b) for a, b in zip(l8, l4)])
        if best_rep is None or rep.latency < best_rep.latency:
            best_rep = rep
    if best_rep is None:
        raise ConfigError("no resource partition is feasible")
    return best_rep


MIXED_COLUMNS = ("network", "ratio_8bit", "act_bits", "fpga", "speedup_vs_4b_dla", "latency")


def mixed_weights(network="resnet34", ratios=(0.05, 0.15, 0.25), act_bits=6, tgt=GX400):
    layers = builtin(network).layers
    base = best(network, tgt, DLA, PrecisionConfig(4, act_bits)).report
    rows = []
    for r in ratios:
        rep = intra_layer_mixed_weights(layers, r, tgt, act_bits, name=network)
        rows.append([network, r, act_bits, tgt.name, rep.speedup_over(base), rep.latency])
    return rows


# ---------------------------------------------------------------- registry

SCENARIOS = {
    "activation-sweep": (SWEEP_COLUMNS, activation_sweep),
    "bramac-compare": (COMPARE_COLUMNS, bramac_compare),
    "ablation": (COMPARE_COLUMNS, ablation),
    "iso-area": (ISO_COLUMNS, iso_area),
    "mixed-weights": (MIXED_COLUMNS, mixed_weights),
}

_ATTENTION = " The attention benchmark counts the QKV and output projections as well as QK^T and AV."

NOTES = {
    "activation-sweep": "GX650, 8-bit weights, activations 8..4; speedup over DLA tuned by the same search."
                        + _ATTENTION,
    "bramac-compare": "uniform 2/4/8-bit; 8-bit VGG-16 and ResNets on GX650, everything else on GX400."
                      + _ATTENTION,
    "ablation": "DP-M4S with N_I restricted to {1}, {1,2}, {1,2,4}; speedup over BRAMAC-1DA.",
    "iso-area": "GX-M4: 2489 M4BRAM-L, no DSP. GX-DSP: 2489 plain M20K plus 640 DSP.",
    "mixed-weights": "ResNet-34 on GX400, SY-M4L, 6-bit activations; speedup over all-4-bit DLA.",
}


def run_scenario(sid: str, out_dir, **kwargs):
    """Run one suite and write <out_dir>/<sid>.csv atomically; returns (path, rows)."""
    if sid not in SCENARIOS:
        raise ConfigError(f"unknown scenario {sid!r}; choose from {', '.join(SCENARIOS)}")
    columns, fn = SCENARIOS[sid]
    try:
        rows = fn(**kwargs)
    except (ConfigError, InfeasibleError) as exc:
        raise type(exc)(f"scenario {sid}: {exc}") from exc
    from pathlib import Path

    path = atomic_write(Path(out_dir) / f"{sid}.csv", _csv(columns, rows))
    return path, rows
