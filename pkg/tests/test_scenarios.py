import pytest

from m4bram.dse import GX400, GX650, GX_DSP, GX_M4, search
from m4bram.hetero_dla import ConfigError, LayerShape, fc_layer
from m4bram.precision import PrecisionConfig
from m4bram.scenarios import (
    COMPARE_COLUMNS,
    DLA,
    NOTES,
    SCENARIOS,
    SWEEP_COLUMNS,
    SY_M4L,
    bramac_target,
    geomean,
    intra_layer_mixed_weights,
    run_scenario,
    split_filters,
)

TOY = [LayerShape(c=3, k=16, p=8, q=8, r=3, s=3, name="c1"), LayerShape(c=16, k=24, p=4, q=4, r=3, s=3, name="c2"),
       fc_layer(384, 20, "fc")]


@pytest.mark.parametrize("sid,kw", [("activation-sweep", {"acts": ()}), ("iso-area", {"acts": ()}),
                                    ("bramac-compare", {"bits": ()}), ("ablation", {"bits": ()}),
                                    ("mixed-weights", {"ratios": ()})])
def test_empty_sweep_gives_empty_report(sid, kw, tmp_path):
    if sid == "mixed-weights":
        kw["network"] = "alexnet"
    path, rows = run_scenario(sid, tmp_path, **kw)
    assert rows == []
    assert path.read_text() == ",".join(SCENARIOS[sid][0]) + "\n"


def test_unknown_scenario(tmp_path):
    with pytest.raises(ConfigError):
        run_scenario("fig99", tmp_path)


def test_bramac_target_rule():
    for net in ("vgg16", "resnet18", "resnet34"):
        assert bramac_target(net, 8) is GX650
        assert bramac_target(net, 4) is GX400
    assert bramac_target("alexnet", 8) is GX400
    assert bramac_target("vit_base_attention", 8) is GX400


def test_iso_area_targets():
    assert (GX_M4.m20k_blocks, GX_M4.dsp_blocks) == (2489, 0)
    assert (GX_DSP.m20k_blocks, GX_DSP.dsp_blocks) == (2489, 640)


def test_small_sweep_rows(tmp_path):
    path, rows = run_scenario("activation-sweep", tmp_path, networks=("alexnet",), acts=(6,))
    assert len(rows) == 3 and all(r[0] == "alexnet" and r[2] == 6 for r in rows)
    assert path.read_text().splitlines()[0] == ",".join(SWEEP_COLUMNS)
    _, rows = run_scenario("bramac-compare", tmp_path, networks=("alexnet",), bits=(4,))
    assert [r[3] for r in rows] == ["BRAMAC-1DA", "BRAMAC-2SA", "DP-M4S", "SY-M4L"]
    assert len(rows[0]) == len(COMPARE_COLUMNS)


def test_split_filters():
    eight, four = split_filters(TOY, 0.25)
    assert [l.k for l in eight] == [4, 6, 5]
    assert [l.k for l in four] == [12, 18, 15]
    eight, four = split_filters(TOY, 0.0)
    assert all(l is None for l in eight)


@pytest.mark.parametrize("ratio,bits", [(0.0, 4), (1.0, 8)])
def test_mixed_extremes_equal_uniform(ratio, bits):
    rep = intra_layer_mixed_weights(TOY, ratio, GX400, 6, SY_M4L)
    uni = search(TOY, GX400, SY_M4L.config(PrecisionConfig(bits, 6)), SY_M4L.n_i_allowed).report
    assert rep.latency == uni.latency


def test_mixed_conserves_work_and_rejects_bad_input():
    rep = intra_layer_mixed_weights(TOY, 0.25, GX400, 6, SY_M4L)
    assert rep.macs == sum(l.macs for l in TOY)
    with pytest.raises(ConfigError):
        intra_layer_mixed_weights(TOY, 1.5)
    with pytest.raises(ConfigError):
        intra_layer_mixed_weights(TOY, 0.25, partition=1.0)
    with pytest.raises(ConfigError):
        intra_layer_mixed_weights(TOY, 0.25, partition=0.001)  # no DSP left for the 8-bit group


def test_geomean_and_notes():
    assert geomean([1, 4]) == pytest.approx(2.0)
    assert set(NOTES) == set(SCENARIOS)
    assert "projection" in NOTES["activation-sweep"]
    assert DLA.config(PrecisionConfig(8, 8)).label == "DLA"
