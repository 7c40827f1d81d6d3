#!/usr/bin/env python3
"""Condense the suite CSVs from run_all_scenarios.py into headline numbers."""

import csv
import sys
from collections import defaultdict
from pathlib import Path
from statistics import mean

from m4bram.scenarios import geomean


def rows(path: Path):
    with path.open(newline="") as f:
        return list(csv.DictReader(f))


def activation(path: Path) -> None:
    by = defaultdict(list)
    stall = defaultdict(list)
    for r in rows(path):
        by[(r["config"], int(r["act_bits"]))].append(float(r["speedup"]))
        if r["network"] == "vgg16":
            stall[r["config"]].append(float(r["stall_fraction"]))
    configs = sorted({c for c, _ in by})
    acts = sorted({a for _, a in by}, reverse=True)
    print("mean speedup over DLA (all networks)")
    print("config    " + " ".join(f"a={a:<5d}" for a in acts))
    for c in configs:
        print(f"{c:9s} " + " ".join(f"{mean(by[c, a]):7.3f}" for a in acts))
    if stall:
        share = mean(x for v in stall.values() for x in v)
        print(f"VGG-16 DSP stall share, averaged over configs and widths: {share:.2%}")


def bramac(path: Path) -> None:
    by = defaultdict(list)
    for r in rows(path):
        by[r["config"]].append(float(r["speedup"]))
    print("mean speedup over DLA, uniform precision")
    for c, v in sorted(by.items()):
        print(f"  {c:11s} {mean(v):6.3f}  (geomean {geomean(v):.3f})")
    m4 = [x for c in ("DP-M4S", "SY-M4L") for x in by.get(c, [])]
    br = [x for c in ("BRAMAC-1DA", "BRAMAC-2SA") for x in by.get(c, [])]
    if m4 and br:
        print(f"M4BRAM / BRAMAC geomean ratio: {geomean(m4) / geomean(br):.3f}")


def ablation(path: Path) -> None:
    by = defaultdict(list)
    for r in rows(path):
        by[r["config"]].append(float(r["speedup"]))
    print("mean speedup over BRAMAC-1DA")
    for c, v in by.items():
        print(f"  {c:16s} {mean(v):6.3f}")


def iso(path: Path) -> None:
    v = [float(r["speedup"]) for r in rows(path)]
    print(f"GX-M4 over GX-DSP: mean {mean(v):.3f}, min {min(v):.3f}, max {max(v):.3f}")


def mixed(path: Path) -> None:
    for r in rows(path):
        print(f"  8-bit share {float(r['ratio_8bit']):.2f}: {float(r['speedup_vs_4b_dla']):.3f}x over 4-bit DLA")


def main(d: Path) -> None:
    for name, fn in (("activation-sweep", activation), ("bramac-compare", bramac),
                     ("ablation", ablation), ("iso-area", iso), ("mixed-weights", mixed)):
        path = d / f"{name}.csv"
        if path.exists():
            print(f"== {name}")
            fn(path)


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("results"))
