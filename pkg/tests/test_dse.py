import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from m4bram.dse import (
    DEFAULT_AREA,
    GX400,
    GX650,
    GX_DSP,
    GX_M4,
    FpgaTarget,
    InfeasibleError,
    ResourceUsage,
    balanced_q_bpe,
    buffer_blocks,
    check_feasible,
    core_area_increase,
    enumerate_candidates,
    grid,
    objective,
    resource_usage,
    search,
    target,
    unit_areas,
)
from m4bram.engine_perf import Arch, profile
from m4bram.hetero_dla import AccelConfig, ConfigError, LayerShape, TilingConfig, simulate_network
from m4bram.precision import PrecisionConfig, Pumping

M4S, M4L, PLAIN = profile(Arch.M4BRAM_S), profile(Arch.M4BRAM_L), profile(Arch.PLAIN)


def test_presets():
    assert (GX400.logic_blocks, GX400.dsp_blocks, GX400.m20k_blocks) == (12816, 648, 1537)
    assert (GX400.area_fraction_logic, GX400.area_fraction_dsp, GX400.area_fraction_m20k) == (55.6, 15.7, 28.7)
    assert (GX650.logic_blocks, GX650.dsp_blocks, GX650.m20k_blocks) == (20736, 1152, 2489)
    assert (GX650.area_fraction_logic, GX650.area_fraction_dsp, GX650.area_fraction_m20k) == (54.7, 17.0, 28.3)
    assert (GX_M4.m20k_blocks, GX_M4.dsp_blocks) == (2489, 0)
    assert (GX_DSP.m20k_blocks, GX_DSP.dsp_blocks) == (2489, 640)


def test_unit_areas():
    assert unit_areas(GX400).unit_area_dsp == pytest.approx((15.7 / 648) / (28.7 / 1537), rel=1e-12)
    assert unit_areas(GX400).unit_area_dsp == pytest.approx(1.297, abs=1e-3)
    a, b = unit_areas(GX400), unit_areas(GX650)
    assert abs(a.unit_area_dsp / b.unit_area_dsp - 1) < 0.05
    assert abs(a.unit_area_logic / b.unit_area_logic - 1) < 0.05
    with pytest.raises(ConfigError):
        unit_areas(GX_M4)


def test_area_anchors():
    assert DEFAULT_AREA.extra_area_in_dsps(M4L, 2489) == pytest.approx(640, abs=7)
    assert core_area_increase(M4L) == pytest.approx(0.095, abs=0.002)
    assert core_area_increase(M4S) == pytest.approx(0.056, abs=0.002)


@pytest.mark.parametrize("perf,area,score", [(1, 1, 1), (2, 1, 4), (2, 2, 2)])
def test_objective(perf, area, score):
    assert objective(perf, area) == score


def test_objective_rejects_non_positive():
    with pytest.raises(ValueError):
        objective(0, 1)


def test_empty_usage_and_dsp_linearity():
    assert resource_usage(None, AccelConfig()) == ResourceUsage(0, 0, 0, 0.0)
    cfg = AccelConfig(precision=PrecisionConfig(8, 8))
    a = resource_usage(TilingConfig(c_vec=4, k_vec=4), cfg)
    b = resource_usage(TilingConfig(c_vec=4, k_vec=5), cfg)  # 20 lanes vs 16: two more multipliers, one block
    assert b.dsp_blocks == a.dsp_blocks + 2
    per_block = b.area - a.area - (b.bram_blocks - a.bram_blocks) * DEFAULT_AREA.bram_area(PLAIN)
    assert per_block == pytest.approx(2 * DEFAULT_AREA.unit_area_dsp)


def test_mixed_weight_feasibility_example():
    assert check_feasible(GX400, 612, 816)
    assert not check_feasible(GX400, 666, 912)


def test_bramac_keeps_separate_dsp_weights():
    t = TilingConfig(c_vec=8, k_vec=20, q_vec=4, q_bpe=2)
    p = PrecisionConfig(8, 8)
    inp, out = buffer_blocks(8, 20, 1, p)
    filt = -(-20 * 8 // 32) * 8
    m4 = resource_usage(t, AccelConfig(arch=M4S, precision=p, n_i=1))
    br = resource_usage(t, AccelConfig(arch=profile(Arch.BRAMAC_1DA), precision=p, pumping=Pumping.DP))
    # the DSP reads weights straight out of M4BRAM blocks, but not out of a BRAMAC in CIM mode
    assert m4.bram_blocks == max(m4.cim_blocks, filt) + inp + out
    assert br.bram_blocks == br.cim_blocks + filt + inp + out


def test_grid_and_balance():
    assert grid(1) == [1]
    assert grid(13) == [1, 2, 4, 8, 13]
    assert grid(16) == [1, 2, 4, 8, 16]
    # DSP does q - qb cycles, BPE does ceil(p*qb/n_i) * period / 2
    assert balanced_q_bpe(8, 1, 1, 6) == 2


def test_target_lookup(tmp_path):
    assert target("GX400") is GX400 and target(GX650) is GX650
    f = tmp_path / "t.json"
    f.write_text(json.dumps(dict(name="tiny", logic_blocks=10, dsp_blocks=4, m20k_blocks=20,
                                 area_fraction_logic=50, area_fraction_dsp=20, area_fraction_m20k=30)))
    assert target(str(f)).dsp_blocks == 4
    with pytest.raises(ConfigError):
        target("nope")
    f.write_text(json.dumps(dict(name="bad")))
    with pytest.raises(ConfigError):
        target(str(f))


TINY = [LayerShape(c=3, k=6, p=4, q=5, r=3, s=3, name="a"), LayerShape(c=6, k=4, p=2, q=2, r=1, s=1, name="b")]
SMALL_FPGA = FpgaTarget("small", 1000, 24, 60, 55.0, 17.0, 28.0)


def brute_force(layers, tgt, cfg, n_i_allowed):
    from dataclasses import replace

    from m4bram.dse import _usage_arrays

    cand = enumerate_candidates(layers, tgt, cfg, n_i_allowed)
    best = None
    for i in range(len(cand["k_vec"])):
        k, c, q, p, r, n, qb = (int(cand[x][i]) for x in ("k_vec", "c_vec", "q_vec", "p_vec", "r_vec", "n_i", "q_bpe"))
        dsp, bram, _, area = _usage_arrays(k, c, p, q, qb, n, cfg, DEFAULT_AREA)
        if dsp > tgt.dsp_blocks or bram > tgt.m20k_blocks:
            continue
        t = TilingConfig(c_vec=c, k_vec=k, r_vec=r, p_vec=p, q_vec=q, q_bpe=qb)
        c_i = replace(cfg, n_i=n) if cfg.arch.is_m4bram else cfg
        s = objective(simulate_network(layers, t, c_i).perf, float(area))
        key = (-s, k, c, q, p, r, n, qb)
        if best is None or key < best:
            best = key
    return best


@pytest.mark.parametrize("arch,pump", [(M4S, Pumping.DP), (M4L, Pumping.SY), (PLAIN, Pumping.SY)])
@pytest.mark.parametrize("tgt", [SMALL_FPGA, GX400])
def test_search_matches_brute_force(arch, pump, tgt):
    cfg = AccelConfig(arch=arch, precision=PrecisionConfig(8, 5), pumping=pump)
    res = search(TINY, tgt, cfg, (1, 2, 4))
    want = brute_force(TINY, tgt, cfg, (1, 2, 4))
    t = res.tiling
    got = (-res.score, t.k_vec, t.c_vec, t.q_vec, t.p_vec, t.r_vec, res.config.n_i, t.q_bpe)
    assert got[1:] == want[1:]
    assert res.score == pytest.approx(-want[0], rel=1e-12)
    assert res.usage.fits(tgt)


def test_search_is_deterministic_and_table_is_complete():
    cfg = AccelConfig(arch=M4L, precision=PrecisionConfig(8, 6))
    a = search(TINY, GX400, cfg, keep_table=True)
    b = search(TINY, GX400, cfg, keep_table=True)
    assert a.tiling == b.tiling and a.candidates_csv() == b.candidates_csv()
    rows = a.candidates_csv().splitlines()
    assert len(rows) - 1 == len(a.candidates["k_vec"])
    feasible = a.candidates["feasible"]
    assert not np.isnan(a.candidates["score_bound"][feasible]).any()
    exact = a.candidates["score"]
    evaluated = ~np.isnan(exact)
    assert (a.candidates["score_bound"][evaluated] >= exact[evaluated] * (1 - 1e-12)).all()


@pytest.mark.parametrize("arch", [M4S, M4L])
def test_n_i_subset_never_scores_higher(arch):
    cfg = AccelConfig(arch=arch, precision=PrecisionConfig(4, 6), pumping=Pumping.DP)
    full = search(TINY, GX400, cfg, (1, 2, 4)).score
    for sub in ((1,), (2,), (4,), (1, 2)):
        assert search(TINY, GX400, cfg, sub).score <= full * (1 + 1e-12)


def test_infeasible_and_invalid_requests():
    cfg = AccelConfig(arch=M4L, precision=PrecisionConfig(8, 8))
    with pytest.raises(InfeasibleError):
        search(TINY, FpgaTarget("none", 10, 0, 1, 50, 20, 30), cfg)
    with pytest.raises(InfeasibleError):
        search(TINY, GX400, cfg, (3,))
    with pytest.raises(ConfigError):
        search([], GX400, cfg)


def test_target_without_dsp_runs_everything_on_bpes():
    cfg = AccelConfig(arch=M4L, precision=PrecisionConfig(8, 6))
    res = search(TINY, GX_M4, cfg)
    assert res.tiling.q_bpe == res.tiling.q_vec and res.usage.dsp_blocks == 0


@given(st.integers(1, 64), st.integers(1, 8), st.sampled_from((1, 2, 4)), st.integers(3, 10))
def test_balanced_split_in_range(q, p, n_i, period):
    assert 0 <= balanced_q_bpe(q, p, n_i, period) <= q


def test_dominance():
    # equal area: higher perf wins; equal perf: smaller area wins
    assert objective(3, 5) > objective(2, 5)
    assert objective(3, 4) > objective(3, 5)
