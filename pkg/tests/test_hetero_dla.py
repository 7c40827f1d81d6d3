from dataclasses import replace
from math import ceil

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from m4bram.engine_perf import Arch, profile
from m4bram.hetero_dla import (
    REPORT_COLUMNS,
    AccelConfig,
    ConfigError,
    LayerShape,
    TilingConfig,
    convert_matmul_to_conv,
    engine_geometry,
    fc_layer,
    layer_compute_cycles,
    pipeline_latency,
    simulate_layer,
    simulate_network,
    tile_layer,
)
from m4bram.precision import PrecisionConfig, Pumping

M4S = profile(Arch.M4BRAM_S)
M4L = profile(Arch.M4BRAM_L)
PLAIN = profile(Arch.PLAIN)
ARCHS = [M4S, M4L, profile(Arch.BRAMAC_1DA), profile(Arch.BRAMAC_2SA), PLAIN]


def cfg_for(arch, w=8, a=8, pump=Pumping.SY, n_i=1, **kw):
    if arch.is_bramac:
        a = w
        pump = Pumping.DP if arch.name is Arch.BRAMAC_1DA else Pumping.SY
    return AccelConfig(arch=arch, precision=PrecisionConfig(w, a), pumping=pump,
                       n_i=n_i if arch.is_m4bram else 1, **kw)


layers = st.builds(
    LayerShape,
    c=st.integers(1, 24), k=st.integers(1, 40), p=st.integers(1, 9), q=st.integers(1, 9),
    r=st.integers(1, 4), s=st.integers(1, 4), stride=st.integers(1, 2),
)


@st.composite
def tilings(draw, with_bpe=True):
    q = draw(st.integers(1, 8))
    return TilingConfig(
        c_vec=draw(st.integers(1, 8)), k_vec=draw(st.integers(1, 16)), r_vec=draw(st.integers(1, 3)),
        p_vec=draw(st.integers(1, 4)), q_vec=q, q_bpe=draw(st.integers(0, q)) if with_bpe else 0)


@st.composite
def accel(draw):
    arch = draw(st.sampled_from(ARCHS[:4]))
    w = draw(st.sampled_from((2, 4, 8)))
    return cfg_for(arch, w, draw(st.integers(2, 8)), draw(st.sampled_from(Pumping)),
                   draw(st.sampled_from((1, 2, 4))))


def test_matmul_conversion():
    one = convert_matmul_to_conv(1, 1, 1)
    assert one.macs == 1
    qk = convert_matmul_to_conv(197, 64, 197)
    assert (qk.c, qk.k, qk.q, qk.p, qk.r) == (64, 197, 197, 1, 1)
    assert fc_layer(4096, 1000).macs == 4096 * 1000


@given(st.integers(1, 500), st.integers(1, 500), st.integers(1, 500))
def test_matmul_macs_preserved(m, n, l):
    assert convert_matmul_to_conv(m, n, l).macs == m * n * l


def test_tile_examples():
    layer = LayerShape(c=8, k=16, p=2, q=2, r=3, s=3)
    assert len(tile_layer(layer, TilingConfig(c_vec=8, k_vec=16, r_vec=3, p_vec=2, q_vec=2))) == 1
    assert len(tile_layer(LayerShape(c=4, k=64), TilingConfig(c_vec=4, k_vec=16))) == 4


@given(layers, tilings())
def test_tiles_cover_layer_once(layer, t):
    tiles = tile_layer(layer, t)
    assert sum(x["k"] * x["c"] * x["p"] * x["q"] * x["r"] * x["s"] for x in tiles) == layer.macs


@given(layers, tilings(), accel())
def test_work_conservation_and_pipeline_bounds(layer, t, cfg):
    lp = simulate_layer(layer, t, cfg)
    assert lp.bpe_macs + lp.dsp_macs == lp.macs == layer.macs
    assert lp.latency >= max(lp.load_cycles, lp.compute_cycles, lp.store_cycles)
    assert lp.latency <= lp.load_cycles + lp.compute_cycles + lp.store_cycles
    assert lp.dsp_stall_cycles <= lp.compute_cycles
    for u in (lp.bpe_utilization, lp.dsp_utilization):
        assert 0.0 <= u <= 1.0 + 1e-12


@given(layers, tilings(), accel())
def test_closed_form_matches_tile_walk(layer, t, cfg):
    n_i = cfg.pixels_per_mac2 if t.q_bpe else 1
    compute, stall = layer_compute_cycles(layer, t.k_vec, t.c_vec, t.p_vec, t.q_vec, t.r_vec, t.q_bpe, n_i, cfg)
    lp = simulate_layer(layer, t, cfg)
    assert (int(compute), int(stall)) == (lp.compute_cycles, lp.dsp_stall_cycles)


def test_pipeline_latency_examples():
    assert pipeline_latency([5], [10], [3]) == 18
    # load of tile 2 hides under compute of tile 1
    assert pipeline_latency([2, 2], [10, 10], [1, 1]) == 2 + 10 + 10 + 1
    # memory-bound: the next load dominates
    assert pipeline_latency([1, 20], [2, 2], [0, 0]) == 1 + 20 + 2


def test_zero_split_is_pure_dsp():
    layer = LayerShape(c=16, k=32, p=7, q=7, r=3, s=3)
    t = TilingConfig(c_vec=8, k_vec=16, r_vec=3, p_vec=1, q_vec=7, q_bpe=0)
    m4 = simulate_layer(layer, t, cfg_for(M4L))
    dla = simulate_layer(layer, t, cfg_for(PLAIN))
    assert m4.bpe_cycles == 0 and m4.latency == dla.latency and m4.dsp_stall_cycles == 0


def test_plain_bram_rejects_bpe_columns():
    with pytest.raises(ConfigError):
        simulate_layer(LayerShape(c=1, k=1, q=2), TilingConfig(1, 1, q_vec=2, q_bpe=1), cfg_for(PLAIN))
    with pytest.raises(ConfigError):
        TilingConfig(1, 1, q_vec=2, q_bpe=3)


def test_n_i_validation():
    with pytest.raises(ConfigError):
        AccelConfig(arch=M4S, n_i=3)
    AccelConfig(arch=profile(Arch.BRAMAC_2SA), n_i=1, precision=PrecisionConfig(8, 8))


@given(layers, tilings(), st.sampled_from((M4S, M4L)), st.integers(2, 8), st.sampled_from((1, 2, 4)))
def test_removing_stalls_never_hurts(layer, t, arch, a, n_i):
    cfg = cfg_for(arch, 8, a, n_i=n_i)
    with_stall = simulate_layer(layer, t, cfg)
    without = simulate_layer(layer, t, replace(cfg, stall_override=0))
    assert without.latency <= with_stall.latency
    assert without.dsp_stall_cycles == 0


def test_stall_delta_when_dsp_bound():
    layer = LayerShape(c=64, k=64, p=14, q=14, r=3, s=3)
    t = TilingConfig(c_vec=16, k_vec=32, r_vec=3, p_vec=2, q_vec=14, q_bpe=1)
    cfg = cfg_for(M4L, 8, 8, Pumping.DP, n_i=1)
    a = simulate_layer(layer, t, cfg)
    b = simulate_layer(layer, t, replace(cfg, stall_override=0))
    assert a.dsp_stall_cycles > 0
    assert a.dsp_cycles + a.dsp_stall_cycles >= a.bpe_cycles
    assert a.compute_cycles - b.compute_cycles == a.dsp_stall_cycles
    assert a.latency - b.latency == a.dsp_stall_cycles


def test_bramac_never_stalls_the_dsp():
    layer = LayerShape(c=64, k=64, p=14, q=14, r=3, s=3)
    t = TilingConfig(c_vec=16, k_vec=32, r_vec=3, p_vec=2, q_vec=14, q_bpe=4)
    for arch in ARCHS[2:4]:
        lp = simulate_layer(layer, t, cfg_for(arch))
        assert lp.dsp_stall_cycles == 0 and lp.bpe_cycles > 0


def test_under_filled_kernel_lanes():
    # K = 2 filters on a block that holds N_W = 4 (DP-M4S, 8-bit, N_I = 1)
    cfg = cfg_for(M4S, 8, 8, Pumping.DP, n_i=1)
    assert cfg.n_w == 4
    layer = LayerShape(c=1, k=2, p=1, q=8)
    lp = simulate_layer(layer, TilingConfig(c_vec=1, k_vec=2, q_vec=8, q_bpe=4), cfg)
    assert lp.bpe_utilization == pytest.approx(2 / 4)


def slot_enumerator(layer, t, cfg):
    """Brute-force BPE utilization for a single-tile layer.

    Every BPE MAC (filter, channel, filter tap, pixel) is placed explicitly:
    the filter picks a lane group, the flattened reduction index is dealt
    round-robin across C_VEC blocks, pixels are grouped N_I at a time, and
    each block packs its (pixel group, reduction) stream two per MAC2.
    """
    n_w, n_i = cfg.n_w, cfg.pixels_per_mac2
    qb = layer.q * t.q_bpe // t.q_vec
    pixels = [(p, q) for p in range(layer.p) for q in range(qb)]
    red = [(c, r, s) for c in range(layer.c) for r in range(layer.r) for s in range(layer.s)]
    stream = {}
    useful = 0
    for kg in range(ceil(layer.k / n_w)):
        kernels = range(kg * n_w, min(layer.k, (kg + 1) * n_w))
        for g in range(ceil(len(pixels) / n_i)):
            group = pixels[g * n_i:(g + 1) * n_i]
            for e, _ in enumerate(red):
                blk = (kg, e % t.c_vec)
                stream[blk] = stream.get(blk, 0) + 1
                useful += len(kernels) * len(group)
    n_blocks = ceil(t.k_vec / n_w) * t.c_vec
    mac2s = max(ceil(v / 2) for v in stream.values())
    return useful / (n_blocks * mac2s * 2 * n_w * n_i)


@given(st.integers(1, 12), st.integers(1, 10), st.integers(1, 4), st.integers(1, 8), st.integers(1, 3),
       st.sampled_from((M4S, M4L)), st.sampled_from((1, 2, 4)), st.sampled_from((4, 8)), st.data())
def test_utilization_matches_slot_enumerator(c, k, p, q, r, arch, n_i, w, data):
    cfg = cfg_for(arch, w, 8, Pumping.DP, n_i=n_i)  # even period: no half-MAC2 rounding
    qb = data.draw(st.integers(1, q))
    layer = LayerShape(c=c, k=k, p=p, q=q, r=r, s=r)
    t = TilingConfig(c_vec=c, k_vec=k, r_vec=r, p_vec=p, q_vec=q, q_bpe=qb)
    groups = ceil(p * qb / cfg.pixels_per_mac2)
    assume(groups * r * r % 2 == 0)  # whole MAC2s only
    lp = simulate_layer(layer, t, cfg)
    assert lp.bpe_utilization == pytest.approx(slot_enumerator(layer, t, cfg))


@given(st.sampled_from((M4S, M4L)), st.sampled_from((2, 4, 8)), st.sampled_from((1, 2, 4)),
       st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(1, 3))
def test_full_utilization_when_dims_divide(arch, w, n_i, kmul, qmul, c, r):
    cfg = cfg_for(arch, w, 8, Pumping.DP, n_i=n_i)
    k = cfg.n_w * kmul
    qb = n_i * qmul
    layer = LayerShape(c=c, k=k, p=1, q=2 * qb, r=r, s=r)
    t = TilingConfig(c_vec=c, k_vec=k, r_vec=r, p_vec=1, q_vec=2 * qb, q_bpe=qb)
    assert simulate_layer(layer, t, cfg).bpe_utilization == pytest.approx(1.0)


@given(layers, tilings(with_bpe=False), accel())
def test_doubling_k_doubles_compute(layer, t, cfg):
    t = replace(t, k_vec=min(t.k_vec, layer.k))
    assume(layer.k % t.k_vec == 0)
    big = replace(layer, k=2 * layer.k)
    assert simulate_layer(big, t, cfg).compute_cycles == 2 * simulate_layer(layer, t, cfg).compute_cycles


def test_best_split_never_loses_to_dsp_only():
    net = [LayerShape(c=3, k=16, p=8, q=8, r=3, s=3), LayerShape(c=16, k=32, p=4, q=4, r=3, s=3),
           fc_layer(512, 10)]
    for arch in (M4S, M4L):
        for n_i in (1, 2, 4):
            cfg = cfg_for(arch, 8, 5, Pumping.DP, n_i=n_i)
            t0 = TilingConfig(c_vec=4, k_vec=8, r_vec=3, p_vec=2, q_vec=8, q_bpe=0)
            base = simulate_network(net, t0, cfg_for(PLAIN, 8, 5))
            best = min(simulate_network(net, replace(t0, q_bpe=qb), cfg).latency for qb in range(9))
            assert base.latency / best >= 1.0


def test_network_report():
    layer = LayerShape(c=3, k=8, p=4, q=4, r=3, s=3, name="conv1")
    t = TilingConfig(c_vec=3, k_vec=8, r_vec=3, p_vec=2, q_vec=4, q_bpe=2)
    cfg = cfg_for(M4L)
    rep = simulate_network([layer], t, cfg, "toy")
    assert rep.latency == simulate_layer(layer, t, cfg).latency
    lines = rep.to_csv().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert lines[1].startswith("conv1,")
    assert rep.speedup_over(rep) == 1.0


def test_engine_geometry():
    cfg = cfg_for(M4L, 4, 8, n_i=2)  # lanes 4 per BPE, N_W = 16 / 2 = 8
    g = engine_geometry(TilingConfig(c_vec=4, k_vec=20, q_vec=4, q_bpe=2), cfg)
    assert g.bpe_blocks == ceil(20 / 8) * 4
    assert g.bpe_lanes_per_block == 2 * 8 * 2
    assert g.dsp_lanes == 80


def test_bandwidth_bound_layer():
    layer = LayerShape(c=64, k=64, p=8, q=8, r=1, s=1)
    t = TilingConfig(c_vec=64, k_vec=64, q_vec=8, p_vec=8)
    slow = simulate_layer(layer, t, cfg_for(PLAIN, bytes_per_cycle=1))
    assert slow.latency >= slow.load_cycles > slow.compute_cycles
    with pytest.raises(ConfigError):
        cfg_for(PLAIN, bytes_per_cycle=0)
